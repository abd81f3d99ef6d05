#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "growlab/numerics/ops.hpp"
#include "growlab/tasks/corpus.hpp"
#include "growlab/tasks/primitives.hpp"
#include "growlab/tasks/scoring.hpp"
#include "growlab/tasks/training_data.hpp"
#include "growlab/util/errors.hpp"

using namespace growlab;

namespace {

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

// Independent reading of a copy prompt: the second line holds the sequence,
// the copied words and the blank.
std::string copy_oracle(const PrimitiveItem& item, std::size_t n_words) {
    const auto line = item.prompt.substr(item.prompt.find('\n') + 1);
    const auto words = split_ws(line);
    REQUIRE(words.size() >= n_words + 2);
    REQUIRE(words.back() == "->");
    const std::vector<std::string> seq(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(n_words));
    const std::vector<std::string> sub(words.begin() + static_cast<std::ptrdiff_t>(n_words), words.end() - 2);
    std::string hay, needle;
    for (const auto& w : seq) hay += w + " ";
    for (const auto& w : sub) needle += w + " ";
    const auto pos = hay.find(needle);
    REQUIRE(pos != std::string::npos);
    CHECK(hay.find(needle, pos + 1) == std::string::npos);
    return split_ws(hay.substr(pos + needle.size())).at(0);
}

std::string var_oracle(const PrimitiveItem& item) {
    static const std::regex assign(R"((?:Let )?([a-z]) ?= ?(\d+)\.?)");
    static const std::regex query(R"((?:([a-z])=___|print\(([a-z])\)  # ___|Then ([a-z]) = ___)\. ->$)");
    std::map<std::string, std::string> env;
    std::istringstream in(item.prompt);
    std::string line, asked;
    while (std::getline(in, line)) {
        std::smatch m;
        if (std::regex_match(line, m, query)) {
            asked = m[1].matched ? m[1].str() : m[2].matched ? m[2].str() : m[3].str();
        } else if (std::regex_match(line, m, assign)) {
            env[m[1]] = m[2];
        }
    }
    REQUIRE(!asked.empty());
    REQUIRE(env.count(asked) == 1);
    return env[asked];
}

std::filesystem::path make_corpus(std::size_t n) {
    auto dir = std::filesystem::temp_directory_path() / "growlab_test_corpus";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir / "sub");
    for (std::size_t i = 0; i < n; ++i) {
        std::ofstream(dir / (i % 2 ? "sub" : "") / ("doc" + std::to_string(i) + ".txt")) << "document " << i << "\n";
    }
    return dir;
}

std::set<std::string> names(const std::vector<Document>& docs) {
    std::set<std::string> out;
    for (const auto& d : docs) out.insert(d.name);
    return out;
}

}  // namespace

TEST_CASE("copy item matches the published instance") {
    const std::vector<std::string> words = {"jic", "dqy", "sof", "uzg", "ewr", "oxw", "osp", "tkj", "rvw", "mnu"};
    const auto item = make_copy_item(words, 0, 5);
    CHECK(item.prompt == "Fill in the blank:\njic dqy sof uzg ewr oxw osp tkj rvw mnu jic dqy sof uzg ewr ___. ->");
    CHECK(item.answer() == "oxw");
    CHECK(item.choices.size() == 10);
    CHECK(make_copy_item(words, 0, 9).answer() == "mnu");
    CHECK_THROWS_AS(make_copy_item(words, 1, 9), ContractError);
    CHECK_THROWS_AS(make_copy_item(words, 0, 10), ContractError);
}

TEST_CASE("generated copy items agree with a string-search oracle") {
    for (std::uint64_t s = 0; s < 200; ++s) {
        Rng rng(s);
        const auto item = gen_copy_task(rng);
        item.validate();
        CHECK(item.choices.size() == 10);
        for (const auto& c : item.choices) {
            CHECK(c.size() == 3);
            CHECK(std::all_of(c.begin(), c.end(), [](char ch) { return ch >= 'a' && ch <= 'z'; }));
        }
        CHECK(copy_oracle(item, 10) == item.answer());

        Rng rng2(s + 1000);
        const auto real = gen_copy_real(rng2);
        CHECK(real.family == Family::copy_real);
        CHECK(copy_oracle(real, 10) == real.answer());
    }
    Rng rng(5);
    const auto last = gen_copy_task(rng, 10, 9);
    const auto seq = split_ws(last.prompt.substr(last.prompt.find('\n') + 1));
    CHECK(last.answer() == seq[9]);
}

TEST_CASE("variable item matches the published instance") {
    const std::vector<char> n = {'o', 'k', 't', 'a', 'e'};
    const std::vector<int> v = {23, 3, 13, 1, 9};
    const auto item = make_var_item(n, v, 0, VarFormat::basic);
    CHECK(item.prompt == "Fill in blank:\n\no=23\nk=3\nt=13\na=1\ne=9\no=___. ->");
    CHECK(item.answer() == "23");
    CHECK(var_oracle(item) == "23");
    CHECK(var_oracle(make_var_item(n, v, 2, VarFormat::code)) == "13");
    CHECK(var_oracle(make_var_item(n, v, 4, VarFormat::math)) == "9");
}

TEST_CASE("generated variable items agree with a parse-back oracle") {
    for (auto fmt : {VarFormat::basic, VarFormat::code, VarFormat::math}) {
        for (std::uint64_t s = 0; s < 100; ++s) {
            Rng rng(s);
            const auto item = gen_var_assign(rng, 5, fmt);
            item.validate();
            CHECK(item.choices.size() == 5);
            CHECK(var_oracle(item) == item.answer());
        }
    }
    Rng rng(1);
    CHECK(gen_var_assign(rng, 2).choices.size() == 2);
    CHECK_THROWS_AS(gen_var_assign(rng, 1), ContractError);
}

TEST_CASE("generators are deterministic and serialize") {
    for (auto f : kFamilies) {
        const auto a = generate_items(f, 20, 42);
        const auto b = generate_items(f, 20, 42);
        CHECK(to_jsonl(a) == to_jsonl(b));
        CHECK(to_jsonl(a) != to_jsonl(generate_items(f, 20, 43)));
        const auto back = items_from_jsonl(to_jsonl(a));
        CHECK(to_jsonl(back) == to_jsonl(a));
        CHECK(parse_family(to_string(f)) == f);
    }
    CHECK(chance_level(Family::copy_random) == 0.1);
    CHECK(chance_level(Family::var_math) == 0.2);
    CHECK_THROWS_AS(parse_family("copy"), ConfigError);
    CHECK_THROWS_AS(items_from_jsonl("{\"family\": \"var_basic\"}"), InputError);
}

TEST_CASE("exemplars never include the query") {
    const auto pool = exemplar_pool(Family::var_basic, 3, 16);
    Rng rng(1);
    for (const auto& query : pool) {
        const auto shots = pick_exemplars(pool, query, 5, rng);
        CHECK(shots.size() == 5);
        std::set<std::string> seen;
        for (const auto& s : shots) {
            CHECK(s.prompt != query.prompt);
            CHECK(s.family == query.family);
            seen.insert(s.prompt);
        }
        CHECK(seen.size() == 5);
        const auto prompt = few_shot_prompt(shots, query);
        CHECK(prompt.size() > query.prompt.size());
        CHECK(prompt.substr(prompt.size() - query.prompt.size()) == query.prompt);
    }
    CHECK_THROWS_AS(pick_exemplars(std::span(pool).first(3), pool[0], 5, rng), ContractError);
}

TEST_CASE("continuation log-probability") {
    Tensor logits({3, 4});
    logits.at(0, 2) = 1.0f;
    logits.at(1, 1) = 2.0f;
    const std::vector<int> toks = {0, 2, 1};
    const double z0 = std::log(3.0 + std::exp(1.0)), z1 = std::log(3.0 + std::exp(2.0));
    CHECK(continuation_logprob(logits, toks, 1) == doctest::Approx((1.0 - z0) + (2.0 - z1)).epsilon(1e-6));
    CHECK(continuation_logprob(logits, toks, 2) == doctest::Approx(2.0 - z1).epsilon(1e-6));
    CHECK_THROWS_AS(continuation_logprob(logits, toks, 0), ContractError);
}

TEST_CASE("uniform predictor scores at chance") {
    const auto scorer = uniform_scorer(640, 256);
    for (auto f : {Family::copy_random, Family::var_basic}) {
        const auto items = generate_items(f, 2000, 11);
        const auto pool = exemplar_pool(f, 11);
        const auto r = score_multiple_choice(scorer, items, 5, pool, 11);
        const double p = chance_level(f);
        const double sigma = std::sqrt(p * (1 - p) / 2000.0);
        CHECK(r.skipped == 0);
        CHECK(std::abs(r.accuracy - p) <= 3 * sigma);
    }
}

TEST_CASE("answer-peeking predictor scores 1") {
    const auto items = generate_items(Family::var_code, 50, 2);
    const auto pool = exemplar_pool(Family::var_code, 2);
    std::map<std::string, std::string> key;
    for (const auto& it : items) key[it.prompt] = " " + it.answer();
    Scorer oracle{640, [&key](std::span<const int> toks) {
                      const auto text = detokenize(toks);
                      Tensor out({toks.size(), 256});
                      for (const auto& [prompt, answer] : key) {
                          const auto at = text.rfind(prompt);
                          if (at == std::string::npos || at + prompt.size() + answer.size() != text.size()) continue;
                          const std::size_t start = at + prompt.size();
                          for (std::size_t j = 0; j < answer.size(); ++j) {
                              out.at(start + j - 1, static_cast<std::size_t>(static_cast<unsigned char>(answer[j]))) = 50.0f;
                          }
                      }
                      return out;
                  }};
    const auto r = score_multiple_choice(oracle, items, 5, pool, 2);
    CHECK(r.accuracy == 1.0);
    CHECK(r.n_correct == 50);
}

TEST_CASE("overlong prompts are skipped and tallied") {
    const auto items = generate_items(Family::copy_real, 10, 4);
    const auto pool = exemplar_pool(Family::copy_real, 4);
    const auto r = score_multiple_choice(uniform_scorer(100, 256), items, 5, pool, 4);
    CHECK(r.skipped == 10);
    CHECK(r.n_scored == 0);
    CHECK(r.accuracy == 0.0);
    for (int p : r.predictions) CHECK(p == -1);
    CHECK_THROWS_AS(score_multiple_choice(uniform_scorer(100, 256), {}, 5, pool, 4), ContractError);
}

TEST_CASE("model scorer agrees with forward") {
    ModelSpec s;
    s.n_layers = 2;
    s.d_model = 8;
    s.d_ff = 8;
    s.n_heads = 2;
    s.vocab_size = 256;
    s.context_len = 700;
    const LayerStack stack = init_stack<float>(s, 3);
    const auto scorer = model_scorer(stack);
    const std::vector<int> toks = {70, 105, 108, 108};
    const auto a = scorer.logits(toks);
    const auto b = forward(stack, toks, false).logits;
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST_CASE("byte tokenizer round trip") {
    std::string all;
    for (int c = 0; c < 256; ++c) all.push_back(static_cast<char>(c));
    const auto ids = tokenize(all);
    CHECK(ids.size() == 256);
    CHECK(ids[200] == 200);
    CHECK(detokenize(ids) == all);
    const std::vector<int> bad = {256};
    CHECK_THROWS_AS(detokenize(bad), InputError);
}

TEST_CASE("corpus split by document") {
    const auto dir = make_corpus(100);
    const std::vector<std::filesystem::path> roots = {dir};
    const auto a = ingest_corpus(roots, {0.8, 0.1, 0.1}, 9);
    CHECK(a.train.size() == 80);
    CHECK(a.heldout.size() == 10);
    CHECK(a.lens.size() == 10);
    std::set<std::string> all = names(a.train);
    for (const auto& n : names(a.heldout)) CHECK(all.insert(n).second);
    for (const auto& n : names(a.lens)) CHECK(all.insert(n).second);
    CHECK(all.size() == 100);

    const auto b = ingest_corpus(roots, {0.8, 0.1, 0.1}, 9);
    CHECK(names(a.heldout) == names(b.heldout));
    CHECK(names(a.train) == names(b.train));
    const auto c = ingest_corpus(roots, {0.8, 0.1, 0.1}, 10);
    CHECK(names(a.heldout) != names(c.heldout));

    const auto odd = ingest_corpus(roots, {0.75, 0.125, 0.125}, 1);
    CHECK(odd.train.size() + odd.heldout.size() + odd.lens.size() == 100);

    auto empty = std::filesystem::temp_directory_path() / "growlab_test_empty";
    std::filesystem::remove_all(empty);
    std::filesystem::create_directories(empty);
    const std::vector<std::filesystem::path> none = {empty};
    CHECK_THROWS_AS(ingest_corpus(none, {0.8, 0.1, 0.1}, 1), InputError);
    const std::vector<std::filesystem::path> missing = {empty / "nope"};
    CHECK_THROWS_AS(ingest_corpus(missing, {0.8, 0.1, 0.1}, 1), InputError);
    std::filesystem::remove_all(empty);
    std::filesystem::remove_all(dir);
}

TEST_CASE("prepared training data mixes primitives into train only") {
    const auto dir = make_corpus(20);
    DataConfig cfg;
    cfg.corpus_dir = dir.string();
    cfg.primitive_docs = 10;
    const auto a = prepare_data(cfg, 5);
    const auto b = prepare_data(cfg, 5);
    CHECK(a.data.train == b.data.train);
    const auto train_text = detokenize(a.data.train);
    const auto held_text = detokenize(a.data.heldout);
    CHECK(train_text.find("Fill in") != std::string::npos);
    CHECK(held_text.find("Fill in") == std::string::npos);
    CHECK(!a.lens.empty());
    std::filesystem::remove_all(dir);
}

TEST_CASE("bundled corpus is present") {
    const std::vector<std::filesystem::path> roots = {bundled_corpus_dir()};
    const auto docs = load_documents(roots);
    CHECK(docs.size() > 200);
}
