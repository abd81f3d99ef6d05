#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "growlab/numerics/rng.hpp"
#include "json.hpp"

namespace growlab {

enum class Family { copy_random, copy_real, var_basic, var_code, var_math };

inline constexpr std::array<Family, 5> kFamilies = {Family::copy_random, Family::copy_real, Family::var_basic,
                                                    Family::var_code, Family::var_math};

std::string to_string(Family f);
/// Unknown names raise ConfigError on field "family".
Family parse_family(std::string_view name);

enum class VarFormat { basic, code, math };

/// One multiple-choice question. The model is scored on " " + choice after the prompt.
struct PrimitiveItem {
    Family family = Family::copy_random;
    std::string prompt;
    std::vector<std::string> choices;
    std::size_t answer_index = 0;
    std::uint64_t seed = 0;

    const std::string& answer() const { return choices.at(answer_index); }
    /// Exactly one correct choice, all choices distinct. Throws ContractError.
    void validate() const;
};

/// Copy item over a fixed word sequence: the prompt repeats words[start, start+sub_len)
/// and asks for words[start+sub_len]. Choices are the words in sequence order.
PrimitiveItem make_copy_item(std::span<const std::string> words, std::size_t start, std::size_t sub_len,
                             Family family = Family::copy_random);

/// Variable item over fixed assignments; asks for names[query]. Choices are the
/// values in assignment order.
PrimitiveItem make_var_item(std::span<const char> names, std::span<const int> values, std::size_t query,
                            VarFormat format);

/// Random 3-letter lowercase words, all distinct; choices shuffled.
PrimitiveItem gen_copy_task(Rng& rng, std::size_t n_words = 10, std::size_t sub_len = 5);
/// Same layout over distinct words from the bundled list of real 3-letter words.
PrimitiveItem gen_copy_real(Rng& rng, std::size_t n_words = 10, std::size_t sub_len = 5);
/// Distinct single-letter names with distinct two-digit values; choices shuffled.
PrimitiveItem gen_var_assign(Rng& rng, std::size_t n_vars = 5, VarFormat format = VarFormat::basic);

/// Family default generator.
PrimitiveItem generate(Family family, Rng& rng);
/// n items; item i is drawn from its own stream derive_seed(seed, "<family>/<i>").
std::vector<PrimitiveItem> generate_items(Family family, std::size_t n, std::uint64_t seed);

/// 1 / number of choices of the family's default generator.
double chance_level(Family family);

std::span<const std::string_view> real_words();

nlohmann::json to_json(const PrimitiveItem& item);
PrimitiveItem item_from_json(const nlohmann::json& j);
std::string to_jsonl(std::span<const PrimitiveItem> items);
std::vector<PrimitiveItem> items_from_jsonl(std::string_view text);

/// Solved form of an item as it appears in a few-shot prompt.
std::string solved(const PrimitiveItem& item);
/// k solved exemplars (blank-line separated) followed by the query prompt.
std::string few_shot_prompt(std::span<const PrimitiveItem> exemplars, const PrimitiveItem& query);
/// k distinct pool entries whose prompts differ from the query's. Throws
/// ContractError when the pool cannot supply them.
std::vector<PrimitiveItem> pick_exemplars(std::span<const PrimitiveItem> pool, const PrimitiveItem& query,
                                          std::size_t k, Rng& rng);

/// Training document: `n_items` solved items of one family, blank-line separated.
std::string solved_document(Family family, std::size_t n_items, Rng& rng);

}  // namespace growlab
