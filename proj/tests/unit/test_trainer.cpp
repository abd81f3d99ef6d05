#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "growlab/model/transformer.hpp"
#include "growlab/numerics/ops.hpp"
#include "growlab/numerics/rng.hpp"
#include "growlab/trainer/config.hpp"
#include "growlab/trainer/flops.hpp"
#include "growlab/trainer/schedule.hpp"
#include "growlab/trainer/trainer.hpp"
#include "growlab/util/errors.hpp"

using namespace growlab;

namespace {

RunConfig tiny_config(Strategy strategy) {
    RunConfig c;
    c.model.d_model = 8;
    c.model.d_ff = 8;
    c.model.n_heads = 2;
    c.model.vocab_size = 13;
    c.model.context_len = 16;
    c.model.n_layers = 6;
    c.growth.strategy = strategy;
    c.growth.block_size = 2;
    c.growth.initial_depth = strategy == Strategy::none ? 6 : 2;
    c.growth.final_depth = 6;
    c.growth.growth_budget = 24;
    c.growth.total_budget = 30;
    c.schedule.peak_lr = 1e-2;
    c.schedule.warmup_steps = 3;
    c.schedule.decay_start = 24;
    c.schedule.total_steps = 30;
    c.data.seq_len = 8;
    c.data.batch_tokens = 16;
    c.eval_every = 10;
    c.eval_batches = 2;
    c.checkpoint_every = 0;
    c.seed = 7;
    return c;
}

TrainData tiny_data() {
    // Period-5 pattern plus noise: learnable but not trivial.
    TrainData d;
    Rng rng(99);
    for (int i = 0; i < 600; ++i) d.train.push_back(rng.below(4) == 0 ? static_cast<int>(rng.below(13)) : i % 5);
    for (int i = 0; i < 200; ++i) d.heldout.push_back(i % 5);
    return d;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string stack_bytes(const LayerStack& s) {
    Container c;
    pack_stack(s, c);
    return encode_container(c);
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("growlab_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("lr schedule knots") {
    LRSchedule s{1.0, 100, 1000, 2000};
    CHECK(lr_at(0, s) == 0.0);
    CHECK(lr_at(50, s) == doctest::Approx(0.5));
    CHECK(lr_at(100, s) == 1.0);
    CHECK(lr_at(1000, s) == 1.0);
    CHECK(lr_at(1250, s) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(lr_at(2000, s) == 0.0);
    CHECK_THROWS_AS(lr_at(2001, s), ContractError);
    CHECK_THROWS_AS(lr_at(0, LRSchedule{1.0, 10, 5, 20}), ContractError);
}

TEST_CASE("lr schedule has no jumps") {
    const LRSchedule s{3e-3, 200, 17000, 20000};
    // Largest slope of 1 - sqrt(x) over one step sits at the first decay step.
    const double tail = s.total_steps - s.decay_start;
    const double bound = s.peak_lr * std::max(1.0 / s.warmup_steps, std::sqrt(1.0 / tail)) + 1e-15;
    double worst = 0;
    for (std::uint64_t t = 0; t < s.total_steps; ++t) worst = std::max(worst, std::abs(lr_at(t + 1, s) - lr_at(t, s)));
    CHECK(worst <= bound);
}

TEST_CASE("run config json is strict") {
    const auto base = to_json(tiny_config(Strategy::lidas));
    const auto round = run_config_from_json(base);
    CHECK(to_json(round) == base);

    auto typo = base;
    typo["growth"]["strtegy"] = "midas";
    try {
        run_config_from_json(typo);
        FAIL("unknown key accepted");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "growth.strtegy");
    }

    auto wrong_type = base;
    wrong_type["data"]["seq_len"] = "long";
    CHECK_THROWS_AS(run_config_from_json(wrong_type), ConfigError);

    auto bad_clip = base;
    bad_clip["optimizer"]["clip_norm"] = 0.0;
    try {
        run_config_from_json(bad_clip);
        FAIL("clip_norm 0 accepted");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "optimizer.clip_norm");
    }

    auto depth = base;
    depth["model"]["n_layers"] = 8;
    try {
        run_config_from_json(depth);
        FAIL("depth mismatch accepted");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "model.n_layers");
    }

    auto strategy = base;
    strategy["growth"]["strategy"] = "sideways";
    CHECK_THROWS_AS(run_config_from_json(strategy), ConfigError);
}

TEST_CASE("flops accounting") {
    const FlopsDims dims{16, 64, 100, 32, 16};
    const std::vector<StagePlan> flat = {{1, 4, 1000, 0, false}};
    const auto self = flops_estimate(dims, flat, 512);
    CHECK(self.ratio == 1.0L);
    CHECK(self.total == self.baseline);

    // The depth-proportional part doubles exactly with depth.
    const long double fixed = 6.0L * dims.vocab_size * dims.d_model;
    CHECK(per_token_flops(dims, 8) - fixed == 2 * (per_token_flops(dims, 4) - fixed));

    const std::vector<StagePlan> grown = {{1, 2, 500, 0, true}, {2, 4, 500, 0, false}};
    const auto g = flops_estimate(dims, grown, 512);
    CHECK(g.ratio > 1.0L);
    CHECK(g.total == 500.0L * 512 * (per_token_flops(dims, 2) + per_token_flops(dims, 4)));
}

TEST_CASE("flops ratio at the published model sizes") {
    GrowthPlan plan;
    plan.strategy = Strategy::midas;
    plan.block_size = 4;
    plan.initial_depth = 4;
    plan.alpha = 1.0;
    plan.growth_budget = 170000;
    plan.total_budget = 200000;

    plan.final_depth = 32;
    const auto small = flops_estimate({960, 2560, 49152, 2048, 320}, plan_run(plan), 1u << 20);
    CHECK(std::abs(static_cast<double>(small.ratio) - 1.289) <= 0.05);
    CHECK(static_cast<double>(small.baseline) / 1e15 == doctest::Approx(613527.488).epsilon(0.02));

    plan.final_depth = 24;
    const auto large = flops_estimate({2048, 8192, 49152, 2048, 2048}, plan_run(plan), 1u << 21);
    CHECK(std::abs(static_cast<double>(large.ratio) - 1.288) <= 0.05);
    CHECK(static_cast<double>(large.baseline) / 1e15 == doctest::Approx(4813222.102).epsilon(0.02));
}

TEST_CASE("run without growth matches a plain loop") {
    const auto cfg = tiny_config(Strategy::none);
    const auto data = tiny_data();
    const auto res = run(cfg, data);
    REQUIRE(res.metrics.size() == 30);

    auto stack = init_stack<float>(cfg.model, derive_seed(cfg.seed, "init"));
    auto opt = init_optimizer(stack, 0.9, 0.95, 1e-8, 0.01);
    Rng rng(derive_seed(cfg.seed, "batches"));
    const std::size_t seq = cfg.data.seq_len, B = cfg.batch_size();
    for (std::uint64_t step = 0; step < 30; ++step) {
        std::vector<int> in, tg;
        for (std::size_t b = 0; b < B; ++b) {
            const auto off = static_cast<std::size_t>(rng.below(data.train.size() - seq));
            in.insert(in.end(), data.train.begin() + off, data.train.begin() + off + seq);
            tg.insert(tg.end(), data.train.begin() + off + 1, data.train.begin() + off + seq + 1);
        }
        Tape<float> tape;
        auto bound = bind(tape, stack, true);
        auto loss = cross_entropy(forward_graph(bound, in, seq), tg);
        tape.backward(loss);
        std::vector<Tensor> grads = {tape.grad(bound.embedding.id), tape.grad(bound.final_norm.id)};
        for (const auto& l : bound.layers) {
            for (const auto& v : l) grads.push_back(tape.grad(v.id));
        }
        const double norm = clip_gradients(grads, 1.0);
        adamw_step(named_params(stack), grads, opt, lr_at(step + 1, cfg.schedule));
        CHECK(res.metrics[step].loss == static_cast<double>(loss.value()[0]));
        CHECK(res.metrics[step].grad_norm == norm);
    }
    CHECK(stack_bytes(res.stack) == stack_bytes(stack));
}

TEST_CASE("training is bit-reproducible") {
    const auto cfg = tiny_config(Strategy::lidas);
    const auto data = tiny_data();
    const auto a = scratch("det_a"), b = scratch("det_b");
    run(cfg, data, {a, {}});
    run(cfg, data, {b, {}});
    CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
    CHECK(slurp(a / "checkpoints/final.ckpt") == slurp(b / "checkpoints/final.ckpt"));
    CHECK(!slurp(a / "metrics.csv").empty());
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}

TEST_CASE("growth events during a run") {
    const auto cfg = tiny_config(Strategy::lidas);
    const auto dir = scratch("grow");
    const auto res = run(cfg, tiny_data(), {dir, {}});
    CHECK(res.stack.depth() == 6);
    REQUIRE(res.growth_log.size() == 2);
    for (const auto& ev : res.growth_log) {
        CHECK(std::isfinite(ev["post_growth_loss"].get<double>()));
        CHECK(ev.contains("loss_within_2x"));
    }

    // Stage budgets PROP-1 over 24 steps with k = 3: 4, 8, 12(+6 cooldown).
    std::vector<std::size_t> depth_at(31, 0);
    for (const auto& r : res.metrics) depth_at[r.step] = r.depth;
    CHECK(depth_at[4] == 2);
    CHECK(depth_at[5] == 4);
    CHECK(depth_at[12] == 4);
    CHECK(depth_at[13] == 6);
    CHECK(depth_at[30] == 6);

    // The schedule runs on across the growth events.
    for (const auto& r : res.metrics) CHECK(r.lr == lr_at(r.step, cfg.schedule));

    const auto post = read_container(dir / "checkpoints/step_0000004_post_growth.ckpt");
    const auto pre = read_container(dir / "checkpoints/step_0000004_pre_growth.ckpt");
    CHECK(pre.meta["kind"] == "pre_growth");
    const auto grown = unpack_stack(post);
    REQUIRE(grown.depth() == 4);
    for (const auto& layer : grown.layers) {
        if (!layer.parent_uid) continue;
        const auto& parent = grown.layers[grown.index_of(*layer.parent_uid)];
        for (auto role : kLayerRoles) CHECK(std::ranges::equal(layer.tensor(role).data(), parent.tensor(role).data()));
    }
    Tape<float> tape;
    auto bound = bind(tape, grown, false);
    const std::vector<int> toks = {1, 2, 3, 4, 0, 1, 2, 3};
    const auto logits = forward_graph(bound, toks, 8).value();
    for (float v : logits.data()) CHECK(std::isfinite(v));
    std::filesystem::remove_all(dir);
}

TEST_CASE("loss decreases on a learnable stream") {
    auto cfg = tiny_config(Strategy::none);
    cfg.growth.total_budget = cfg.schedule.total_steps = 150;
    cfg.growth.growth_budget = cfg.schedule.decay_start = 120;
    cfg.eval_every = 50;
    const auto res = run(cfg, tiny_data());
    CHECK(res.final_eval_loss < 0.6 * res.initial_eval_loss);
}

TEST_CASE("non-finite loss aborts with the last checkpoint") {
    auto cfg = tiny_config(Strategy::lidas);
    cfg.schedule.peak_lr = 1e38;
    const auto dir = scratch("nan");
    try {
        run(cfg, tiny_data(), {dir, {}});
        FAIL("run did not abort");
    } catch (const TrainingAborted& e) {
        CHECK(e.step() >= 1);
        if (!e.last_checkpoint().empty()) CHECK(std::filesystem::exists(e.last_checkpoint()));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("metrics csv layout") {
    const std::vector<MetricRow> rows = {{1, 1, 4, 0.5, 2.25, 0.125}};
    CHECK(format_metrics_csv(rows) == "step,stage,depth,lr,loss,grad_norm\n1,1,4,0.5,2.25,0.125\n");
}
