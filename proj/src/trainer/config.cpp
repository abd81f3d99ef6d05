#include "growlab/trainer/config.hpp"

#include <cmath>
#include <fstream>

#include "growlab/util/errors.hpp"
#include "growlab/util/json_fields.hpp"

namespace growlab {

void RunConfig::validate() const {
    try {
        model.validate();
    } catch (const ContractError& e) {
        throw ConfigError("model", e.what());
    }
    try {
        growth.validate();
    } catch (const ContractError& e) {
        throw ConfigError("growth", e.what());
    }
    if (model.n_layers != growth.final_depth) {
        throw ConfigError("model.n_layers", "must equal growth.final_depth (" + std::to_string(growth.final_depth) + ")");
    }
    try {
        schedule.validate();
    } catch (const ContractError& e) {
        throw ConfigError("schedule", e.what());
    }
    if (schedule.total_steps != growth.total_budget) throw ConfigError("schedule", "total steps must equal growth.total_budget");
    if (!(optimizer.clip_norm > 0.0)) throw ConfigError("optimizer.clip_norm", "must be > 0");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) throw ConfigError("optimizer.beta1", "must lie in [0, 1)");
    if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) throw ConfigError("optimizer.beta2", "must lie in [0, 1)");
    if (!(optimizer.eps > 0.0)) throw ConfigError("optimizer.eps", "must be > 0");
    if (!(optimizer.weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay", "must be >= 0");
    if (data.seq_len == 0 || data.seq_len > model.context_len) {
        throw ConfigError("data.seq_len", "must lie in [1, model.context_len]");
    }
    if (data.batch_tokens == 0 || data.batch_tokens % data.seq_len != 0) {
        throw ConfigError("data.batch_tokens", "must be a positive multiple of data.seq_len");
    }
    const double fsum = data.train_fraction + data.heldout_fraction + data.lens_fraction;
    if (data.train_fraction <= 0.0 || data.heldout_fraction <= 0.0 || data.lens_fraction < 0.0 ||
        std::abs(fsum - 1.0) > 1e-9) {
        throw ConfigError("data", "split fractions must be positive and sum to 1");
    }
    if (eval_every == 0) throw ConfigError("eval_every", "must be >= 1");
    if (eval_batches == 0) throw ConfigError("eval_batches", "must be >= 1");
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    JsonFields top(j, "");
    RunConfig cfg;
    if (top.has("model")) cfg.model = model_spec_from_json(top.raw("model"), "model");
    if (top.has("growth")) {
        JsonFields g(top.raw("growth"), "growth");
        std::string strategy = to_string(cfg.growth.strategy);
        g.get("strategy", strategy);
        try {
            cfg.growth.strategy = parse_strategy(strategy);
        } catch (const ContractError& e) {
            throw ConfigError("growth.strategy", e.what());
        }
        g.get("block_size", cfg.growth.block_size);
        g.get("initial_depth", cfg.growth.initial_depth);
        g.get("final_depth", cfg.growth.final_depth);
        g.get("alpha", cfg.growth.alpha);
        g.get("growth_budget", cfg.growth.growth_budget);
        g.get("total_budget", cfg.growth.total_budget);
        g.finish();
    }
    std::uint64_t decay_steps = cfg.schedule.total_steps - cfg.schedule.decay_start;
    if (top.has("schedule")) {
        JsonFields s(top.raw("schedule"), "schedule");
        s.get("peak_lr", cfg.schedule.peak_lr);
        s.get("warmup_steps", cfg.schedule.warmup_steps);
        s.get("decay_steps", decay_steps);
        s.finish();
    }
    cfg.schedule.total_steps = cfg.growth.total_budget;
    if (decay_steps > cfg.schedule.total_steps) throw ConfigError("schedule.decay_steps", "exceeds the total budget");
    cfg.schedule.decay_start = cfg.schedule.total_steps - decay_steps;
    if (top.has("optimizer")) {
        JsonFields o(top.raw("optimizer"), "optimizer");
        o.get("beta1", cfg.optimizer.beta1);
        o.get("beta2", cfg.optimizer.beta2);
        o.get("eps", cfg.optimizer.eps);
        o.get("weight_decay", cfg.optimizer.weight_decay);
        o.get("clip_norm", cfg.optimizer.clip_norm);
        o.finish();
    }
    if (top.has("data")) {
        JsonFields d(top.raw("data"), "data");
        d.get("corpus_dir", cfg.data.corpus_dir);
        d.get("train_fraction", cfg.data.train_fraction);
        d.get("heldout_fraction", cfg.data.heldout_fraction);
        d.get("lens_fraction", cfg.data.lens_fraction);
        d.get("seq_len", cfg.data.seq_len);
        d.get("batch_tokens", cfg.data.batch_tokens);
        d.get("primitive_docs", cfg.data.primitive_docs);
        d.finish();
    }
    top.get("seed", cfg.seed);
    top.get("checkpoint_every", cfg.checkpoint_every);
    top.get("eval_every", cfg.eval_every);
    top.get("eval_batches", cfg.eval_batches);
    top.finish();
    cfg.validate();
    return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
    return {{"model", to_json(cfg.model)},
            {"growth",
             {{"strategy", to_string(cfg.growth.strategy)},
              {"block_size", cfg.growth.block_size},
              {"initial_depth", cfg.growth.initial_depth},
              {"final_depth", cfg.growth.final_depth},
              {"alpha", cfg.growth.alpha},
              {"growth_budget", cfg.growth.growth_budget},
              {"total_budget", cfg.growth.total_budget}}},
            {"schedule",
             {{"peak_lr", cfg.schedule.peak_lr},
              {"warmup_steps", cfg.schedule.warmup_steps},
              {"decay_steps", cfg.schedule.total_steps - cfg.schedule.decay_start}}},
            {"optimizer",
             {{"beta1", cfg.optimizer.beta1},
              {"beta2", cfg.optimizer.beta2},
              {"eps", cfg.optimizer.eps},
              {"weight_decay", cfg.optimizer.weight_decay},
              {"clip_norm", cfg.optimizer.clip_norm}}},
            {"data",
             {{"corpus_dir", cfg.data.corpus_dir},
              {"train_fraction", cfg.data.train_fraction},
              {"heldout_fraction", cfg.data.heldout_fraction},
              {"lens_fraction", cfg.data.lens_fraction},
              {"seq_len", cfg.data.seq_len},
              {"batch_tokens", cfg.data.batch_tokens},
              {"primitive_docs", cfg.data.primitive_docs}}},
            {"seed", cfg.seed},
            {"checkpoint_every", cfg.checkpoint_every},
            {"eval_every", cfg.eval_every},
            {"eval_batches", cfg.eval_batches}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open config file");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace growlab
