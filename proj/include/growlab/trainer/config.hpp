#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "growlab/growth/growth.hpp"
#include "growlab/model/spec.hpp"
#include "growlab/trainer/schedule.hpp"
#include "json.hpp"

namespace growlab {

struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
};

struct DataConfig {
    std::string corpus_dir;  // empty: the bundled corpus
    double train_fraction = 0.8;
    double heldout_fraction = 0.1;
    double lens_fraction = 0.1;
    std::size_t seq_len = 128;
    std::size_t batch_tokens = 8192;  // multiple of seq_len
    std::size_t primitive_docs = 2000;  // solved reasoning-primitive documents mixed into training
};

/// Everything a training run depends on. `model.n_layers` is the final depth.
struct RunConfig {
    ModelSpec model;
    GrowthPlan growth;
    LRSchedule schedule;
    OptimizerConfig optimizer;
    DataConfig data;
    std::uint64_t seed = 1;
    std::uint64_t checkpoint_every = 5000;  // 0: only growth and final checkpoints
    std::uint64_t eval_every = 1000;
    std::size_t eval_batches = 4;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    std::size_t batch_size() const { return data.batch_tokens / data.seq_len; }
};

/// JSON layout: {"model": {...}, "growth": {...}, "schedule": {"peak_lr", "warmup_steps",
/// "decay_steps"}, "optimizer": {...}, "data": {...}, "seed", "checkpoint_every",
/// "eval_every", "eval_batches"}. Missing keys take defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
/// Parse errors and unreadable files raise ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace growlab
