#include "growlab/tasks/primitives.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "growlab/util/errors.hpp"

namespace growlab {

namespace {

constexpr std::string_view kWords[] = {
    "act", "add", "age", "air", "all", "and", "ant", "any", "arm", "art", "ask", "bag", "bar", "bat", "bed", "bee",
    "big", "bit", "box", "boy", "bus", "but", "buy", "can", "cap", "car", "cat", "cow", "cry", "cup", "cut", "day",
    "den", "dig", "dog", "dot", "dry", "ear", "eat", "egg", "end", "eye", "fan", "far", "fat", "few", "fig", "fit",
    "fix", "fly", "fog", "fox", "fun", "gas", "get", "gum", "gun", "hat", "hen", "hit", "hot", "how", "ice", "ink",
    "jam", "jar", "jet", "job", "joy", "key", "kid", "lab", "lap", "law", "leg", "let", "lid", "lip", "log", "low",
    "map", "mat", "mix", "mud", "mug", "net", "new", "nod", "not", "now", "nut", "oak", "odd", "oil", "old", "one",
    "orb", "owl", "own", "pan", "pay", "pea", "pen", "pet", "pie", "pig", "pin", "pit", "pot", "put", "rag", "ram",
    "rat", "raw", "red", "rib", "rim", "rod", "row", "rub", "rug", "run", "sad", "saw", "say", "sea", "see", "set",
    "sew", "shy", "sit", "six", "sky", "sly", "sod", "son", "spy", "sun", "tag", "tan", "tap", "tea", "ten", "tie",
    "tin", "tip", "toe", "top", "toy", "try", "tub", "two", "use", "van", "vet", "wag", "war", "wax", "way", "web",
    "wet", "who", "why", "win", "wit", "yak", "yam", "yes", "yet", "zip",
};

const std::string kCopyHeader = "Fill in the blank:\n";
const std::string kVarHeader = "Fill in blank:\n\n";
const std::string kBlank = "___. ->";

std::string join(std::span<const std::string> words, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) out += " ";
        out += words[i];
    }
    return out;
}

void shuffle_choices(PrimitiveItem& item, Rng& rng) {
    const std::string answer = item.answer();
    rng.shuffle(std::span<std::string>(item.choices));
    item.answer_index = static_cast<std::size_t>(
        std::find(item.choices.begin(), item.choices.end(), answer) - item.choices.begin());
}

void check_copy_shape(std::size_t n_words, std::size_t sub_len) {
    if (sub_len == 0 || sub_len >= n_words) throw ContractError("copy task needs 0 < sub_len < n_words");
}

PrimitiveItem copy_from_words(std::vector<std::string> words, std::size_t sub_len, Family family, Rng& rng) {
    const std::size_t start = static_cast<std::size_t>(rng.below(words.size() - sub_len));
    auto item = make_copy_item(words, start, sub_len, family);
    shuffle_choices(item, rng);
    return item;
}

}  // namespace

std::string to_string(Family f) {
    switch (f) {
        case Family::copy_random: return "copy_random";
        case Family::copy_real: return "copy_real";
        case Family::var_basic: return "var_basic";
        case Family::var_code: return "var_code";
        case Family::var_math: return "var_math";
    }
    return "unknown";
}

Family parse_family(std::string_view name) {
    for (auto f : kFamilies) {
        if (to_string(f) == name) return f;
    }
    throw ConfigError("family", "unknown task family '" + std::string(name) +
                                    "' (expected copy_random, copy_real, var_basic, var_code or var_math)");
}

void PrimitiveItem::validate() const {
    if (choices.size() < 2) throw ContractError("item needs at least two choices");
    if (answer_index >= choices.size()) throw ContractError("answer index out of range");
    std::set<std::string> seen(choices.begin(), choices.end());
    if (seen.size() != choices.size()) throw ContractError("item choices are not distinct");
}

PrimitiveItem make_copy_item(std::span<const std::string> words, std::size_t start, std::size_t sub_len,
                             Family family) {
    check_copy_shape(words.size(), sub_len);
    if (start + sub_len >= words.size()) throw ContractError("copied span has no following word");
    PrimitiveItem item;
    item.family = family;
    item.prompt = kCopyHeader + join(words, 0, words.size()) + " " + join(words, start, start + sub_len) + " " + kBlank;
    item.choices.assign(words.begin(), words.end());
    item.answer_index = start + sub_len;
    item.validate();
    return item;
}

PrimitiveItem make_var_item(std::span<const char> names, std::span<const int> values, std::size_t query,
                            VarFormat format) {
    if (names.size() != values.size() || names.size() < 2) throw ContractError("variable item needs >= 2 name/value pairs");
    if (query >= names.size()) throw ContractError("query index out of range");
    std::ostringstream p;
    p << kVarHeader;
    for (std::size_t i = 0; i < names.size(); ++i) {
        switch (format) {
            case VarFormat::basic: p << names[i] << "=" << values[i] << "\n"; break;
            case VarFormat::code: p << names[i] << " = " << values[i] << "\n"; break;
            case VarFormat::math: p << "Let " << names[i] << " = " << values[i] << ".\n"; break;
        }
    }
    switch (format) {
        case VarFormat::basic: p << names[query] << "=" << kBlank; break;
        case VarFormat::code: p << "print(" << names[query] << ")  # " << kBlank; break;
        case VarFormat::math: p << "Then " << names[query] << " = " << kBlank; break;
    }
    PrimitiveItem item;
    item.family = format == VarFormat::basic ? Family::var_basic
                  : format == VarFormat::code ? Family::var_code
                                              : Family::var_math;
    item.prompt = p.str();
    for (int v : values) item.choices.push_back(std::to_string(v));
    item.answer_index = query;
    item.validate();
    return item;
}

PrimitiveItem gen_copy_task(Rng& rng, std::size_t n_words, std::size_t sub_len) {
    check_copy_shape(n_words, sub_len);
    std::vector<std::string> words;
    std::set<std::string> seen;
    while (words.size() < n_words) {
        std::string w(3, 'a');
        for (auto& c : w) c = static_cast<char>('a' + rng.below(26));
        if (seen.insert(w).second) words.push_back(std::move(w));
    }
    auto item = copy_from_words(std::move(words), sub_len, Family::copy_random, rng);
    item.seed = rng.seed();
    return item;
}

PrimitiveItem gen_copy_real(Rng& rng, std::size_t n_words, std::size_t sub_len) {
    check_copy_shape(n_words, sub_len);
    const std::size_t pool = std::size(kWords);
    if (n_words > pool) throw ContractError("word list too short for " + std::to_string(n_words) + " words");
    std::vector<std::size_t> idx(pool);
    for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
    // Partial Fisher-Yates: the first n_words entries form a uniform sample.
    for (std::size_t i = 0; i < n_words; ++i) std::swap(idx[i], idx[i + rng.below(pool - i)]);
    std::vector<std::string> words;
    for (std::size_t i = 0; i < n_words; ++i) words.emplace_back(kWords[idx[i]]);
    auto item = copy_from_words(std::move(words), sub_len, Family::copy_real, rng);
    item.seed = rng.seed();
    return item;
}

PrimitiveItem gen_var_assign(Rng& rng, std::size_t n_vars, VarFormat format) {
    if (n_vars < 2 || n_vars > 26) throw ContractError("n_vars must lie in [2, 26]");
    std::vector<char> names;
    std::vector<int> values;
    std::set<char> used_names;
    std::set<int> used_values;
    while (names.size() < n_vars) {
        const char c = static_cast<char>('a' + rng.below(26));
        if (used_names.insert(c).second) names.push_back(c);
    }
    while (values.size() < n_vars) {
        const int v = 10 + static_cast<int>(rng.below(90));
        if (used_values.insert(v).second) values.push_back(v);
    }
    auto item = make_var_item(names, values, static_cast<std::size_t>(rng.below(n_vars)), format);
    shuffle_choices(item, rng);
    item.seed = rng.seed();
    return item;
}

PrimitiveItem generate(Family family, Rng& rng) {
    switch (family) {
        case Family::copy_random: return gen_copy_task(rng);
        case Family::copy_real: return gen_copy_real(rng);
        case Family::var_basic: return gen_var_assign(rng, 5, VarFormat::basic);
        case Family::var_code: return gen_var_assign(rng, 5, VarFormat::code);
        case Family::var_math: return gen_var_assign(rng, 5, VarFormat::math);
    }
    throw ContractError("unknown family");
}

std::vector<PrimitiveItem> generate_items(Family family, std::size_t n, std::uint64_t seed) {
    std::vector<PrimitiveItem> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, to_string(family) + "/" + std::to_string(i)));
        out.push_back(generate(family, rng));
    }
    return out;
}

double chance_level(Family family) {
    switch (family) {
        case Family::copy_random:
        case Family::copy_real: return 1.0 / 10.0;
        default: return 1.0 / 5.0;
    }
}

std::span<const std::string_view> real_words() { return kWords; }

nlohmann::json to_json(const PrimitiveItem& item) {
    return {{"family", to_string(item.family)},
            {"prompt", item.prompt},
            {"choices", item.choices},
            {"answer_index", item.answer_index},
            {"seed", item.seed}};
}

PrimitiveItem item_from_json(const nlohmann::json& j) {
    PrimitiveItem item;
    try {
        item.family = parse_family(j.at("family").get<std::string>());
        item.prompt = j.at("prompt").get<std::string>();
        item.choices = j.at("choices").get<std::vector<std::string>>();
        item.answer_index = j.at("answer_index").get<std::size_t>();
        item.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed item: ") + e.what());
    }
    try {
        item.validate();
    } catch (const ContractError& e) {
        throw InputError(std::string("invalid item: ") + e.what());
    }
    return item;
}

std::string to_jsonl(std::span<const PrimitiveItem> items) {
    std::string out;
    for (const auto& it : items) out += to_json(it).dump() + "\n";
    return out;
}

std::vector<PrimitiveItem> items_from_jsonl(std::string_view text) {
    std::vector<PrimitiveItem> out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw InputError(std::string("bad JSON line: ") + e.what());
        }
        out.push_back(item_from_json(j));
    }
    return out;
}

std::string solved(const PrimitiveItem& item) { return item.prompt + " " + item.answer(); }

std::string few_shot_prompt(std::span<const PrimitiveItem> exemplars, const PrimitiveItem& query) {
    std::string out;
    for (const auto& e : exemplars) out += solved(e) + "\n\n";
    return out + query.prompt;
}

std::vector<PrimitiveItem> pick_exemplars(std::span<const PrimitiveItem> pool, const PrimitiveItem& query,
                                          std::size_t k, Rng& rng) {
    std::vector<std::size_t> eligible;
    std::set<std::string> prompts;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].family == query.family && pool[i].prompt != query.prompt && prompts.insert(pool[i].prompt).second) {
            eligible.push_back(i);
        }
    }
    if (eligible.size() < k) throw ContractError("exemplar pool has fewer than k usable items");
    for (std::size_t i = 0; i < k; ++i) std::swap(eligible[i], eligible[i + rng.below(eligible.size() - i)]);
    std::vector<PrimitiveItem> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(pool[eligible[i]]);
    return out;
}

std::string solved_document(Family family, std::size_t n_items, Rng& rng) {
    std::string out;
    for (std::size_t i = 0; i < n_items; ++i) {
        if (i > 0) out += "\n\n";
        out += solved(generate(family, rng));
    }
    return out;
}

}  // namespace growlab
