#include "growlab/trainer/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "growlab/model/transformer.hpp"
#include "growlab/numerics/ops.hpp"
#include "growlab/numerics/rng.hpp"
#include "growlab/util/errors.hpp"

namespace growlab {

namespace {

struct Batch {
    std::vector<int> inputs;
    std::vector<int> targets;
};

Batch window_batch(std::span<const int> tokens, std::span<const std::size_t> offsets, std::size_t seq_len) {
    Batch b;
    b.inputs.reserve(offsets.size() * seq_len);
    b.targets.reserve(offsets.size() * seq_len);
    for (std::size_t off : offsets) {
        b.inputs.insert(b.inputs.end(), tokens.begin() + off, tokens.begin() + off + seq_len);
        b.targets.insert(b.targets.end(), tokens.begin() + off + 1, tokens.begin() + off + seq_len + 1);
    }
    return b;
}

double batch_loss(const LayerStack& stack, const Batch& b, std::size_t seq_len) {
    Tape<float> tape;
    auto bound = bind(tape, stack, false);
    return cross_entropy(forward_graph(bound, b.inputs, seq_len), b.targets).value()[0];
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
}

std::string step_name(std::uint64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%07llu", static_cast<unsigned long long>(step));
    return buf;
}

}  // namespace

double eval_loss(const LayerStack& stack, std::span<const int> tokens, std::size_t seq_len, std::size_t batch,
                 std::size_t n_batches) {
    if (tokens.size() < seq_len + 1) throw InputError("held-out stream shorter than one window");
    const std::size_t windows = batch * n_batches;
    const std::size_t span = tokens.size() - seq_len - 1;
    double total = 0.0;
    for (std::size_t k = 0; k < n_batches; ++k) {
        std::vector<std::size_t> offsets(batch);
        for (std::size_t i = 0; i < batch; ++i) offsets[i] = span * (k * batch + i) / std::max<std::size_t>(windows, 1);
        total += batch_loss(stack, window_batch(tokens, offsets, seq_len), seq_len);
    }
    return total / static_cast<double>(n_batches);
}

Container make_checkpoint(const LayerStack& stack, const OptimizerState& opt, const RunConfig& cfg,
                          std::uint64_t step, std::size_t stage, const std::string& kind) {
    Container c;
    c.meta["format"] = "growlab-checkpoint";
    c.meta["version"] = 1;
    c.meta["step"] = step;
    c.meta["stage"] = stage;
    c.meta["kind"] = kind;
    c.meta["run_config"] = to_json(cfg);
    pack_stack(stack, c);
    pack_optimizer(opt, c);
    return c;
}

std::string format_metrics_csv(std::span<const MetricRow> rows) {
    std::string out = "step,stage,depth,lr,loss,grad_norm\n";
    for (const auto& r : rows) {
        out += std::to_string(r.step) + "," + std::to_string(r.stage) + "," + std::to_string(r.depth) + "," + fmt(r.lr) +
               "," + fmt(r.loss) + "," + fmt(r.grad_norm) + "\n";
    }
    return out;
}

std::string format_eval_csv(std::span<const EvalRow> rows) {
    std::string out = "step,stage,depth,eval_loss\n";
    for (const auto& r : rows) {
        out += std::to_string(r.step) + "," + std::to_string(r.stage) + "," + std::to_string(r.depth) + "," +
               fmt(r.loss) + "\n";
    }
    return out;
}

RunResult run(const RunConfig& cfg, const TrainData& data, const RunOptions& options) {
    cfg.validate();
    const std::size_t seq_len = cfg.data.seq_len;
    const std::size_t B = cfg.batch_size();
    if (data.train.size() < seq_len + 2) throw InputError("training stream shorter than one window");
    const auto stages = plan_run(cfg.growth);

    const bool to_disk = !options.out_dir.empty();
    const auto ckpt_dir = options.out_dir / "checkpoints";
    if (to_disk) std::filesystem::create_directories(ckpt_dir);

    ModelSpec spec = cfg.model;
    spec.n_layers = stages.front().depth;
    RunResult res;
    res.stack = init_stack<float>(spec, derive_seed(cfg.seed, "init"));
    res.opt = init_optimizer(res.stack, cfg.optimizer.beta1, cfg.optimizer.beta2, cfg.optimizer.eps,
                             cfg.optimizer.weight_decay);
    Rng batch_rng(derive_seed(cfg.seed, "batches"));
    std::filesystem::path last_ckpt;

    auto save = [&](const std::string& name, std::uint64_t step, std::size_t stage, const std::string& kind) {
        if (!to_disk) return;
        const auto path = ckpt_dir / (name + ".ckpt");
        write_container(path, make_checkpoint(res.stack, res.opt, cfg, step, stage, kind));
        res.checkpoints.push_back(path);
        last_ckpt = path;
    };
    auto evaluate = [&](std::uint64_t step, std::size_t stage) {
        const double l = eval_loss(res.stack, data.heldout, seq_len, B, cfg.eval_batches);
        res.evals.push_back({step, stage, res.stack.depth(), l});
        return l;
    };

    res.initial_eval_loss = evaluate(0, stages.front().stage);
    std::uint64_t step = 0;
    Batch batch;
    std::vector<std::size_t> offsets(B);
    const std::size_t max_offset = data.train.size() - seq_len - 1;

    for (const auto& stage : stages) {
        for (std::uint64_t local = 0; local < stage.steps; ++local) {
            for (auto& o : offsets) o = static_cast<std::size_t>(batch_rng.below(max_offset + 1));
            batch = window_batch(data.train, offsets, seq_len);

            Tape<float> tape;
            auto bound = bind(tape, res.stack, true);
            auto loss = cross_entropy(forward_graph(bound, batch.inputs, seq_len), batch.targets);
            const double loss_value = loss.value()[0];
            if (!std::isfinite(loss_value)) {
                throw TrainingAborted("non-finite loss at step " + std::to_string(step + 1), step + 1, last_ckpt);
            }
            tape.backward(loss);

            auto params = named_params(res.stack);
            std::vector<Var<float>> vars = {bound.embedding, bound.final_norm};
            for (const auto& l : bound.layers) vars.insert(vars.end(), l.begin(), l.end());
            std::vector<Tensor> grads;
            grads.reserve(vars.size());
            for (const auto& v : vars) grads.push_back(tape.has_grad(v.id) ? std::move(tape.grad(v.id)) : Tensor(v.shape()));

            double gnorm = 0.0;
            try {
                gnorm = clip_gradients(grads, cfg.optimizer.clip_norm);
            } catch (const NumericError&) {
                throw TrainingAborted("non-finite gradient at step " + std::to_string(step + 1), step + 1, last_ckpt);
            }
            const double lr = lr_at(step + 1, cfg.schedule);
            adamw_step(params, grads, res.opt, lr);
            ++step;

            MetricRow row{step, stage.stage, res.stack.depth(), lr, loss_value, gnorm};
            res.metrics.push_back(row);
            if (options.on_step) options.on_step(row);
            if (step % cfg.eval_every == 0) evaluate(step, stage.stage);
            if (cfg.checkpoint_every != 0 && step % cfg.checkpoint_every == 0) save(step_name(step), step, stage.stage, "cadence");
        }

        if (stage.grow_at_end) {
            save(step_name(step) + "_pre_growth", step, stage.stage, "pre_growth");
            const double pre = batch_loss(res.stack, batch, seq_len);
            auto grown = grow(res.stack, res.opt, cfg.growth.block_size, cfg.growth.strategy);
            res.stack = std::move(grown.stack);
            res.opt = std::move(grown.opt);
            grown.event.stage = stage.stage;
            const double post = batch_loss(res.stack, batch, seq_len);
            auto line = to_json(grown.event);
            line["pre_growth_loss"] = pre;
            line["post_growth_loss"] = post;
            line["loss_within_2x"] = std::isfinite(post) && post <= 2.0 * pre;
            res.growth_log.push_back(std::move(line));
            save(step_name(step) + "_post_growth", step, stage.stage + 1, "post_growth");
        }
    }

    if (res.evals.empty() || res.evals.back().step != step) evaluate(step, stages.back().stage);
    res.final_eval_loss = res.evals.back().loss;
    save("final", step, stages.back().stage, "final");

    if (to_disk) {
        write_text(options.out_dir / "metrics.csv", format_metrics_csv(res.metrics));
        write_text(options.out_dir / "eval.csv", format_eval_csv(res.evals));
        std::string lines;
        for (const auto& j : res.growth_log) lines += j.dump() + "\n";
        write_text(options.out_dir / "growth_events.jsonl", lines);
    }
    return res;
}

}  // namespace growlab
