#include "growlab/growth/growth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "growlab/util/errors.hpp"

namespace growlab {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::string moment_key(std::uint64_t uid, std::string_view role) {
    return "layer." + std::to_string(uid) + "." + std::string(role);
}

}  // namespace

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::none: return "NONE";
        case Strategy::midas: return "MIDAS";
        case Strategy::lidas: return "LIDAS";
    }
    return "NONE";
}

Strategy parse_strategy(const std::string& text) {
    std::string up = text;
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (up == "NONE") return Strategy::none;
    if (up == "MIDAS") return Strategy::midas;
    if (up == "LIDAS") return Strategy::lidas;
    throw ContractError("unknown growth strategy '" + text + "'");
}

std::vector<std::pair<std::size_t, std::size_t>> partition_blocks(std::size_t L, std::size_t b) {
    if (b == 0 || L == 0 || L % b != 0) {
        throw ContractError("depth " + std::to_string(L) + " is not divisible by block size " + std::to_string(b));
    }
    std::vector<std::pair<std::size_t, std::size_t>> blocks;
    for (std::size_t j = 0; j < L / b; ++j) blocks.emplace_back(j * b, (j + 1) * b - 1);
    return blocks;
}

GrowthWindow midas_window(std::size_t L, std::size_t b) {
    const auto blocks = partition_blocks(L, b);
    const std::size_t m = ceil_div(blocks.size(), 2) - 1;
    return {blocks[m].first, blocks[m].second + 1, blocks[m].second + 1};
}

GrowthWindow lidas_window(std::size_t L, std::size_t b) {
    if (b == 0 || L < b) {
        throw ContractError("LIDAS window of " + std::to_string(b) + " layers does not fit depth " + std::to_string(L));
    }
    const std::size_t m = ceil_div(L, 2);
    const std::size_t begin = m - ceil_div(b, 2);
    const std::size_t end = m + b / 2;
    return {begin, end, end};
}

nlohmann::json to_json(const GrowthEvent& e) {
    return {{"step", e.step},
            {"stage", e.stage},
            {"strategy", to_string(e.strategy)},
            {"old_depth", e.old_depth},
            {"new_depth", e.new_depth},
            {"copied_parent_uids", e.copied_parent_uids},
            {"new_uids", e.new_uids},
            {"insert_index", e.insert_index}};
}

GrowthResult grow(const LayerStack& stack, const OptimizerState& opt, std::size_t b, Strategy strategy) {
    const std::size_t L = stack.depth();
    if (b == 0 || L % b != 0) {
        throw ContractError("cannot grow depth " + std::to_string(L) + " with block size " + std::to_string(b));
    }
    GrowthWindow w;
    switch (strategy) {
        case Strategy::midas: w = midas_window(L, b); break;
        case Strategy::lidas: w = lidas_window(L, b); break;
        case Strategy::none: throw ContractError("strategy NONE does not grow");
    }

    GrowthResult out{stack, opt, {}};
    LayerStack& s = out.stack;
    std::vector<LayerParams> copies;
    for (std::size_t i = w.begin; i < w.end; ++i) {
        LayerParams c = stack.layers[i];
        c.parent_uid = stack.layers[i].uid;
        c.uid = s.next_uid++;
        for (std::string_view role : kLayerRoles) {
            auto it = opt.moments.find(moment_key(stack.layers[i].uid, role));
            if (it == opt.moments.end()) {
                throw ContractError("no optimizer moments for layer " + std::to_string(stack.layers[i].uid));
            }
            out.opt.moments[moment_key(c.uid, role)] = it->second;
        }
        out.event.copied_parent_uids.push_back(stack.layers[i].uid);
        out.event.new_uids.push_back(c.uid);
        copies.push_back(std::move(c));
    }
    s.layers.insert(s.layers.begin() + static_cast<std::ptrdiff_t>(w.insert_at), copies.begin(), copies.end());
    s.spec.n_layers = s.layers.size();

    out.event.strategy = strategy;
    out.event.old_depth = L;
    out.event.new_depth = s.depth();
    out.event.insert_index = w.insert_at;
    out.event.step = opt.step;
    return out;
}

GrowthResult midas_grow(const LayerStack& stack, const OptimizerState& opt, std::size_t b) {
    return grow(stack, opt, b, Strategy::midas);
}

GrowthResult lidas_grow(const LayerStack& stack, const OptimizerState& opt, std::size_t b) {
    return grow(stack, opt, b, Strategy::lidas);
}

std::vector<std::uint64_t> prop_schedule(std::size_t k, std::uint64_t T, double alpha) {
    if (k < 1) throw ContractError("prop_schedule needs at least one stage");
    if (T < k) throw ContractError("growth budget " + std::to_string(T) + " is smaller than " + std::to_string(k) + " stages");
    if (!std::isfinite(alpha)) throw ContractError("alpha must be finite");

    std::vector<long double> weight(k);
    long double total = 0.0L;
    for (std::size_t i = 0; i < k; ++i) total += (weight[i] = std::pow(static_cast<long double>(i + 1), alpha));

    std::vector<std::uint64_t> out(k);
    std::vector<long double> frac(k);
    std::uint64_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const long double quota = static_cast<long double>(T) * weight[i] / total;
        out[i] = static_cast<std::uint64_t>(std::floor(quota));
        frac[i] = quota - static_cast<long double>(out[i]);
        assigned += out[i];
    }
    // Rounding of the quotas can push the floors one past T; take back from the smallest fractions.
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (frac[a] != frac[b]) return frac[a] > frac[b];
        return a > b;
    });
    std::size_t next = 0;
    while (assigned < T) {
        ++out[order[next % k]];
        ++assigned;
        ++next;
    }
    next = k;
    while (assigned > T) {
        --next;
        if (out[order[next]] > 0) {
            --out[order[next]];
            --assigned;
        }
        if (next == 0) next = k;
    }
    return out;
}

void GrowthPlan::validate() const {
    if (total_budget == 0) throw ContractError("total_budget must be positive");
    if (strategy == Strategy::none) {
        if (final_depth < 1) throw ContractError("final_depth must be >= 1");
        return;
    }
    if (block_size < 1) throw ContractError("block_size must be >= 1");
    if (initial_depth < 1) throw ContractError("initial_depth must be >= 1");
    if (final_depth < initial_depth || (final_depth - initial_depth) % block_size != 0) {
        throw ContractError("final_depth - initial_depth must be a non-negative multiple of block_size");
    }
    if (initial_depth % block_size != 0) throw ContractError("initial_depth must be a multiple of block_size");
    if (growth_budget > total_budget) throw ContractError("growth_budget exceeds total_budget");
    const std::size_t k = (final_depth - initial_depth) / block_size + 1;
    if (growth_budget < k) throw ContractError("growth_budget is smaller than the number of stages");
}

std::vector<StagePlan> plan_run(const GrowthPlan& plan) {
    plan.validate();
    if (plan.strategy == Strategy::none) return {{1, plan.final_depth, plan.total_budget, 0, false}};
    const std::size_t k = (plan.final_depth - plan.initial_depth) / plan.block_size + 1;
    const auto budgets = prop_schedule(k, plan.growth_budget, plan.alpha);
    std::vector<StagePlan> stages;
    for (std::size_t i = 0; i < k; ++i) {
        StagePlan s;
        s.stage = i + 1;
        s.depth = plan.initial_depth + i * plan.block_size;
        s.steps = budgets[i];
        s.grow_at_end = i + 1 < k;
        if (i + 1 == k) {
            s.cooldown_steps = plan.total_budget - plan.growth_budget;
            s.steps += s.cooldown_steps;
        }
        stages.push_back(s);
    }
    return stages;
}

}  // namespace growlab
