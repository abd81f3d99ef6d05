#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "growlab/model/checkpoint.hpp"
#include "growlab/model/transformer.hpp"
#include "growlab/tasks/primitives.hpp"

namespace growlab {

/// Affine translator for one layer's output residual: h * weight + bias.
struct LensAdapter {
    Tensor weight;          // [d, d]
    Tensor bias;            // [d]
    bool identity = true;   // applied as a no-op; set for untrained and pinned adapters
    double kl_identity = 0;  // mean KL of the identity map on the evaluation windows
    double kl_trained = 0;   // mean KL of the kept map on the same windows
};

struct LensConfig {
    std::size_t steps = 2000;
    double lr = 1e-3;
    std::size_t seq_len = 128;
    std::size_t eval_windows = 8;  // fixed windows used to compare identity and trained maps
    std::uint64_t seed = 0;
};

/// One adapter per layer of a model of a given depth; index i reads h_{i+1}.
struct LensSet {
    std::vector<LensAdapter> adapters;
    LensConfig config;
    std::string split = "lens";

    std::size_t depth() const noexcept { return adapters.size(); }
    /// Throws StateError when layer i has no adapter.
    const LensAdapter& at(std::size_t i) const;
};

/// Identity adapters for a model of depth L.
LensSet identity_lens(const ModelSpec& spec, std::size_t depth);

/// Trains adapter i to minimize mean KL(final || lens_i) over positions of
/// windows drawn from `tokens`, Adam without weight decay, starting at the
/// identity map. Each adapter keeps whichever of identity and trained has the
/// lower KL on the evaluation windows; the last layer stays the identity.
/// A non-finite loss throws NumericError naming the layer.
LensSet train_lens(const LayerStack& stack, std::span<const int> tokens, const LensConfig& config);

/// unembed(final_norm(adapter_i(h_{i+1}))) for a recorded trace.
Tensor early_exit_logits(const LayerStack& stack, const LensSet& lens, std::size_t i, const ForwardTrace<float>& trace);
/// Same, running the forward pass.
Tensor early_exit_logits(const LayerStack& stack, const LensSet& lens, std::size_t i, std::span<const int> tokens);

/// Mean KL(final || lens_i) over rows, per layer, on one trace.
std::vector<double> lens_kl(const LayerStack& stack, const LensSet& lens, const ForwardTrace<float>& trace,
                            const Tensor& final_logits);

/// Indices of the 5 largest entries of a row, ties to the lower id.
std::vector<int> top5(std::span<const float> row);

/// Per-layer mean over positions and prompts of |top5(lens_i) & top5(final)| / 5.
std::vector<double> top5_overlap(const LayerStack& stack, const LensSet& lens,
                                 std::span<const std::vector<int>> prompts);

struct EarlyExitAccuracy {
    std::vector<double> absolute;  // per layer
    std::vector<double> relative;  // absolute / final; empty when flagged
    double final_accuracy = 0;
    bool flagged = false;          // final accuracy 0: no division performed
    std::size_t n_scored = 0;
    std::size_t skipped = 0;
};

/// Multiple-choice accuracy with every layer's early-exit logits, one trace per
/// (item, choice). Prompts and skip rules follow score_multiple_choice.
EarlyExitAccuracy early_exit_accuracy(const LayerStack& stack, const LensSet& lens,
                                      std::span<const PrimitiveItem> items, std::size_t k_shot,
                                      std::span<const PrimitiveItem> pool, std::uint64_t seed);

/// Tensors "lens.<i>.weight" / "lens.<i>.bias" with role "lens" and meta "lens".
void pack_lens(const LensSet& lens, Container& into);
bool has_lens(const Container& c);
/// Throws MissingPrerequisite when the container holds no adapters.
LensSet unpack_lens(const Container& c);

/// "layer,<name>" header and one row per layer.
void write_layer_csv(const std::filesystem::path& path, const std::string& name, std::span<const double> values);

}  // namespace growlab
