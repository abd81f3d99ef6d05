#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "growlab/growth/growth.hpp"
#include "growlab/model/transformer.hpp"
#include "growlab/numerics/rng.hpp"
#include "growlab/util/errors.hpp"
#include "growth_table.hpp"

using namespace growlab;

namespace {

ModelSpec small_spec(std::size_t L) {
    ModelSpec s;
    s.n_layers = L;
    s.d_model = 8;
    s.d_ff = 8;
    s.n_heads = 2;
    s.vocab_size = 13;
    s.context_len = 16;
    return s;
}

// "0 1 4' ..." in terms of the original uids 0..L-1.
std::string describe(const LayerStack& s) {
    std::string out;
    for (const auto& l : s.layers) {
        if (!out.empty()) out += " ";
        out += l.parent_uid ? std::to_string(*l.parent_uid) + "'" : std::to_string(l.uid);
    }
    return out;
}

OptimizerState noisy_optimizer(const LayerStack& s, std::uint64_t seed) {
    auto opt = init_optimizer(s);
    Rng rng(seed);
    for (auto& [k, m] : opt.moments) {
        for (auto& v : m.m.data()) v = static_cast<float>(rng.normal());
        for (auto& v : m.v.data()) v = static_cast<float>(std::abs(rng.normal()));
    }
    opt.step = 123;
    return opt;
}

}  // namespace

TEST_CASE("partition blocks") {
    const auto two = partition_blocks(8, 4);
    REQUIRE(two.size() == 2);
    CHECK(two[0] == std::pair<std::size_t, std::size_t>{0, 3});
    CHECK(two[1] == std::pair<std::size_t, std::size_t>{4, 7});
    CHECK(partition_blocks(12, 4).size() == 3);
    CHECK_THROWS_AS(partition_blocks(10, 4), ContractError);
}

TEST_CASE("growth windows") {
    CHECK(midas_window(8, 4) == GrowthWindow{0, 4, 4});
    CHECK(midas_window(12, 4) == GrowthWindow{4, 8, 8});
    CHECK(lidas_window(8, 4) == GrowthWindow{2, 6, 6});
    CHECK(lidas_window(12, 4) == GrowthWindow{4, 8, 8});
    CHECK(lidas_window(4, 4) == GrowthWindow{0, 4, 4});
    CHECK_THROWS_AS(lidas_window(3, 4), ContractError);
}

TEST_CASE("growth matches the generated table") {
    for (const auto& row : kGrowthTable) {
        CAPTURE(row.L);
        CAPTURE(row.b);
        const auto s = init_stack<float>(small_spec(row.L), 1);
        const auto opt = init_optimizer(s);
        const auto mid = midas_grow(s, opt, row.b);
        const auto lid = lidas_grow(s, opt, row.b);
        CHECK(describe(mid.stack) == row.midas);
        CHECK(describe(lid.stack) == row.lidas);
        CHECK(mid.stack.depth() == row.L + row.b);
        CHECK(lid.stack.depth() == row.L + row.b);
        if ((row.L / row.b) % 2 == 1) CHECK(describe(mid.stack) == describe(lid.stack));
    }
}

TEST_CASE("growth copies parameters and moments and preserves order") {
    const auto s = init_stack<float>(small_spec(8), 5);
    const auto opt = noisy_optimizer(s, 9);
    const auto g = lidas_grow(s, opt, 4);
    CHECK(g.event.copied_parent_uids == std::vector<std::uint64_t>{2, 3, 4, 5});
    CHECK(g.event.new_uids == std::vector<std::uint64_t>{8, 9, 10, 11});
    CHECK(g.event.insert_index == 6);
    CHECK(g.event.old_depth == 8);
    CHECK(g.event.new_depth == 12);
    CHECK(g.stack.spec.n_layers == 12);
    CHECK(g.stack.next_uid == 12);
    CHECK(g.opt.step == opt.step);

    std::vector<std::uint64_t> originals;
    for (const auto& l : g.stack.layers) {
        if (!l.parent_uid) originals.push_back(l.uid);
    }
    CHECK(originals == s.uids());

    for (const auto& l : g.stack.layers) {
        if (!l.parent_uid) continue;
        const auto& parent = s.layers[s.index_of(*l.parent_uid)];
        for (std::size_t r = 0; r < kLayerRoles.size(); ++r) {
            CHECK(l.tensors()[r]->bitwise_equal(*parent.tensors()[r]));
            const std::string role(kLayerRoles[r]);
            const auto& pm = opt.moments.at("layer." + std::to_string(parent.uid) + "." + role);
            const auto& cm = g.opt.moments.at("layer." + std::to_string(l.uid) + "." + role);
            CHECK(pm.m.bitwise_equal(cm.m));
            CHECK(pm.v.bitwise_equal(cm.v));
        }
    }
    // Input stack untouched; output owns its storage.
    CHECK(s.depth() == 8);
    CHECK(g.stack.layers[0].wq.ptr() != s.layers[0].wq.ptr());

    const auto j = to_json(g.event);
    CHECK(j["strategy"] == "LIDAS");
    CHECK(j["insert_index"] == 6);
    CHECK(j.dump().find('\n') == std::string::npos);
}

TEST_CASE("duplicate block swapped with its parent block leaves logits bitwise equal") {
    const auto s = init_stack<float>(small_spec(8), 5);
    const auto g = midas_grow(s, init_optimizer(s), 4);
    std::vector<int> toks = {1, 5, 2, 12, 0, 7};
    const auto base = forward(g.stack, toks, false).logits;
    auto plan = ExecutionPlan::identity(12);
    for (std::size_t i = 0; i < 4; ++i) std::swap(plan.slots[i].layer, plan.slots[i + 4].layer);
    ForwardOptions opts;
    opts.plan = &plan;
    CHECK(forward(g.stack, toks, false, opts).logits.bitwise_equal(base));
}

TEST_CASE("growth rejects bad inputs") {
    const auto s = init_stack<float>(small_spec(6), 1);
    CHECK_THROWS_AS(midas_grow(s, init_optimizer(s), 4), ContractError);
    CHECK_THROWS_AS(grow(s, init_optimizer(s), 3, Strategy::none), ContractError);
    CHECK_THROWS_AS(midas_grow(s, OptimizerState{}, 3), ContractError);
    CHECK(parse_strategy("lidas") == Strategy::lidas);
    CHECK_THROWS_AS(parse_strategy("deep"), ContractError);
}

TEST_CASE("prop schedule") {
    CHECK(prop_schedule(4, 170000, 1.0) == std::vector<std::uint64_t>{17000, 34000, 51000, 68000});
    CHECK(prop_schedule(1, 999, 2.5) == std::vector<std::uint64_t>{999});
    CHECK(prop_schedule(3, 10, 0.0) == std::vector<std::uint64_t>{3, 3, 4});
    CHECK(prop_schedule(4, 8, 0.0) == std::vector<std::uint64_t>{2, 2, 2, 2});
    CHECK_THROWS_AS(prop_schedule(5, 4, 1.0), ContractError);

    Rng rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 1 + rng.below(12);
        const std::uint64_t T = k + rng.below(1000000);
        const double alpha = rng.uniform() * 3.0;
        const auto s = prop_schedule(k, T, alpha);
        std::uint64_t total = 0;
        for (std::size_t i = 0; i < k; ++i) {
            total += s[i];
            if (i > 0) CHECK(s[i] >= s[i - 1]);
        }
        CHECK(total == T);
    }
}

TEST_CASE("plan_run") {
    GrowthPlan p;
    p.strategy = Strategy::lidas;
    p.block_size = 4;
    p.initial_depth = 4;
    p.final_depth = 16;
    p.growth_budget = 1700;
    p.total_budget = 2000;
    const auto stages = plan_run(p);
    REQUIRE(stages.size() == 4);
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(stages[i].stage == i + 1);
        CHECK(stages[i].depth == 4 * (i + 1));
        CHECK(stages[i].grow_at_end == (i < 3));
        total += stages[i].steps;
    }
    CHECK(stages[3].cooldown_steps == 300);
    CHECK(stages[3].steps == 680 + 300);
    CHECK(total == 2000);

    p.strategy = Strategy::none;
    const auto flat = plan_run(p);
    REQUIRE(flat.size() == 1);
    CHECK(flat[0].depth == 16);
    CHECK(flat[0].steps == 2000);
    CHECK_FALSE(flat[0].grow_at_end);

    p.strategy = Strategy::midas;
    p.final_depth = 14;
    CHECK_THROWS_AS(plan_run(p), ContractError);
    p.final_depth = 16;
    p.growth_budget = 3000;
    CHECK_THROWS_AS(plan_run(p), ContractError);
}
