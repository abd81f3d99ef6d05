#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "growlab/growth/growth.hpp"
#include "growlab/model/layer_stack.hpp"
#include "growlab/trainer/config.hpp"
#include "growlab/trainer/optimizer.hpp"
#include "growlab/util/errors.hpp"

namespace growlab {

struct MetricRow {
    std::uint64_t step = 0;  // updates completed, 1-based
    std::size_t stage = 0;
    std::size_t depth = 0;
    double lr = 0;
    double loss = 0;
    double grad_norm = 0;
};

struct EvalRow {
    std::uint64_t step = 0;
    std::size_t stage = 0;
    std::size_t depth = 0;
    double loss = 0;
};

/// Token streams the run draws from: random windows of `train` for updates,
/// fixed windows of `heldout` for evaluation.
struct TrainData {
    std::vector<int> train;
    std::vector<int> heldout;
};

struct RunOptions {
    std::filesystem::path out_dir;  // empty: keep everything in memory
    std::function<void(const MetricRow&)> on_step;
};

struct RunResult {
    LayerStack stack;
    OptimizerState opt;
    std::vector<MetricRow> metrics;
    std::vector<EvalRow> evals;
    std::vector<nlohmann::json> growth_log;  // one object per growth event
    std::vector<std::filesystem::path> checkpoints;
    double initial_eval_loss = 0;
    double final_eval_loss = 0;
};

/// Non-finite loss or gradient during training. `last_checkpoint` is the
/// most recent checkpoint written before the failure (empty if none).
class TrainingAborted : public NumericError {
public:
    TrainingAborted(const std::string& message, std::uint64_t step, std::filesystem::path last_checkpoint)
        : NumericError(message), step_(step), last_checkpoint_(std::move(last_checkpoint)) {}

    std::uint64_t step() const noexcept { return step_; }
    const std::filesystem::path& last_checkpoint() const noexcept { return last_checkpoint_; }

private:
    std::uint64_t step_;
    std::filesystem::path last_checkpoint_;
};

/// Mean next-token cross-entropy of `stack` on consecutive windows of `tokens`.
double eval_loss(const LayerStack& stack, std::span<const int> tokens, std::size_t seq_len, std::size_t batch,
                 std::size_t n_batches);

/// Runs every stage of cfg.growth, growing between stages. With an out_dir it writes
/// metrics.csv, eval.csv, growth_events.jsonl and checkpoints/ (cadence, pre/post
/// growth, final). Throws TrainingAborted on NaN.
RunResult run(const RunConfig& cfg, const TrainData& data, const RunOptions& options = {});

/// Checkpoint with model, optimizer and run metadata.
Container make_checkpoint(const LayerStack& stack, const OptimizerState& opt, const RunConfig& cfg,
                          std::uint64_t step, std::size_t stage, const std::string& kind);

std::string format_metrics_csv(std::span<const MetricRow> rows);
std::string format_eval_csv(std::span<const EvalRow> rows);

}  // namespace growlab
