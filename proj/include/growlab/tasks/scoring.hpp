#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "growlab/model/layer_stack.hpp"
#include "growlab/model/transformer.hpp"
#include "growlab/tasks/primitives.hpp"

namespace growlab {

/// Anything that maps one token sequence to next-token logits [len, vocab].
struct Scorer {
    std::size_t context_len = 0;
    std::function<Tensor(std::span<const int>)> logits;
};

/// Scorer over a model; `stack` (and `options.plan`) must outlive it.
Scorer model_scorer(const LayerStack& stack, const ForwardOptions& options = {});
/// Constant logits: every choice of equal length scores the same.
Scorer uniform_scorer(std::size_t context_len, std::size_t vocab_size);

/// Sum over t in [prefix_len, len) of log softmax(logits[t-1])[tokens[t]].
double continuation_logprob(const Tensor& logits, std::span<const int> tokens, std::size_t prefix_len);

struct ScoreReport {
    std::size_t n_items = 0;
    std::size_t n_scored = 0;
    std::size_t n_correct = 0;
    std::size_t skipped = 0;        // prompt + choice longer than the context
    double accuracy = 0;            // n_correct / n_scored (0 when nothing was scored)
    std::vector<int> predictions;   // chosen index per item, -1 when skipped
};

/// The few-shot prompt each item is scored with; item i draws its exemplars
/// from `pool` with Rng(derive_seed(seed, "shots/<i>")).
std::vector<std::string> build_prompts(std::span<const PrimitiveItem> items, std::span<const PrimitiveItem> pool,
                                       std::size_t k_shot, std::uint64_t seed);

/// Picks the choice with the largest summed log-probability after the k-shot
/// prompt; ties go to the lowest index.
ScoreReport score_multiple_choice(const Scorer& scorer, std::span<const PrimitiveItem> items, std::size_t k_shot,
                                  std::span<const PrimitiveItem> pool, std::uint64_t seed);

/// Same, with prompts already built (one per item).
ScoreReport score_prompts(const Scorer& scorer, std::span<const PrimitiveItem> items,
                          std::span<const std::string> prompts);

/// Exemplar pool for a family, independent of any evaluation seed stream.
std::vector<PrimitiveItem> exemplar_pool(Family family, std::uint64_t seed, std::size_t n = 64);

}  // namespace growlab
