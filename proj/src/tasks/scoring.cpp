#include "growlab/tasks/scoring.hpp"

#include "growlab/numerics/ops.hpp"
#include "growlab/tasks/corpus.hpp"
#include "growlab/util/errors.hpp"

namespace growlab {

Scorer model_scorer(const LayerStack& stack, const ForwardOptions& options) {
    return {stack.spec.context_len,
            [&stack, options](std::span<const int> tokens) { return forward(stack, tokens, false, options).logits; }};
}

Scorer uniform_scorer(std::size_t context_len, std::size_t vocab_size) {
    return {context_len, [vocab_size](std::span<const int> tokens) { return Tensor({tokens.size(), vocab_size}); }};
}

double continuation_logprob(const Tensor& logits, std::span<const int> tokens, std::size_t prefix_len) {
    if (prefix_len == 0 || prefix_len > tokens.size()) throw ContractError("continuation needs a non-empty prefix");
    if (logits.rank() != 2 || logits.dim(0) != tokens.size()) throw DimensionError("logits rows differ from token count");
    const std::size_t V = logits.dim(1);
    double total = 0.0;
    for (std::size_t t = prefix_len; t < tokens.size(); ++t) {
        const auto row = log_softmax_row<float>(logits.data().subspan((t - 1) * V, V));
        const auto id = static_cast<std::size_t>(tokens[t]);
        if (id >= V) throw InputError("continuation token outside the vocabulary");
        total += row[id];
    }
    return total;
}

std::vector<std::string> build_prompts(std::span<const PrimitiveItem> items, std::span<const PrimitiveItem> pool,
                                       std::size_t k_shot, std::uint64_t seed) {
    std::vector<std::string> prompts;
    prompts.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        Rng rng(derive_seed(seed, "shots/" + std::to_string(i)));
        const auto shots = pick_exemplars(pool, items[i], k_shot, rng);
        prompts.push_back(few_shot_prompt(shots, items[i]));
    }
    return prompts;
}

ScoreReport score_prompts(const Scorer& scorer, std::span<const PrimitiveItem> items,
                          std::span<const std::string> prompts) {
    if (items.empty()) throw ContractError("no items to score");
    if (prompts.size() != items.size()) throw ContractError("one prompt per item required");
    ScoreReport r;
    r.n_items = items.size();
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& item = items[i];
        const auto prefix = tokenize(prompts[i]);
        std::size_t longest = 0;
        for (const auto& c : item.choices) longest = std::max(longest, c.size() + 1);
        if (prefix.size() + longest > scorer.context_len) {
            ++r.skipped;
            r.predictions.push_back(-1);
            continue;
        }
        int best = -1;
        double best_score = 0.0;
        for (std::size_t c = 0; c < item.choices.size(); ++c) {
            auto tokens = prefix;
            const auto cont = tokenize(" " + item.choices[c]);
            tokens.insert(tokens.end(), cont.begin(), cont.end());
            const double s = continuation_logprob(scorer.logits(tokens), tokens, prefix.size());
            if (best < 0 || s > best_score) {
                best = static_cast<int>(c);
                best_score = s;
            }
        }
        r.predictions.push_back(best);
        ++r.n_scored;
        if (static_cast<std::size_t>(best) == item.answer_index) ++r.n_correct;
    }
    r.accuracy = r.n_scored > 0 ? static_cast<double>(r.n_correct) / static_cast<double>(r.n_scored) : 0.0;
    return r;
}

ScoreReport score_multiple_choice(const Scorer& scorer, std::span<const PrimitiveItem> items, std::size_t k_shot,
                                  std::span<const PrimitiveItem> pool, std::uint64_t seed) {
    const auto prompts = build_prompts(items, pool, k_shot, seed);
    return score_prompts(scorer, items, prompts);
}

std::vector<PrimitiveItem> exemplar_pool(Family family, std::uint64_t seed, std::size_t n) {
    return generate_items(family, n, derive_seed(seed, "exemplars"));
}

}  // namespace growlab
