#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "growlab/model/layer_stack.hpp"
#include "growlab/trainer/optimizer.hpp"
#include "json.hpp"

namespace growlab {

enum class Strategy { none, midas, lidas };

std::string to_string(Strategy s);
/// "NONE" / "MIDAS" / "LIDAS", case-insensitive. Throws ContractError otherwise.
Strategy parse_strategy(const std::string& text);

/// n = L/b inclusive index ranges [j*b, (j+1)*b - 1]. Throws ContractError unless b divides L.
std::vector<std::pair<std::size_t, std::size_t>> partition_blocks(std::size_t L, std::size_t b);

/// Layers [begin, end) are copied and the copy is inserted at `insert_at`.
struct GrowthWindow {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t insert_at = 0;

    bool operator==(const GrowthWindow&) const = default;
};

/// Middle block m_b = ceil(n/2) - 1, copied in place after itself.
GrowthWindow midas_window(std::size_t L, std::size_t b);
/// m_l = ceil(L/2); window [m_l - ceil(b/2), m_l + floor(b/2)), copy placed right after it.
/// Only needs L >= b.
GrowthWindow lidas_window(std::size_t L, std::size_t b);

struct GrowthEvent {
    std::uint64_t step = 0;
    std::size_t stage = 0;
    Strategy strategy = Strategy::none;
    std::size_t old_depth = 0;
    std::size_t new_depth = 0;
    std::vector<std::uint64_t> copied_parent_uids;
    std::vector<std::uint64_t> new_uids;
    std::size_t insert_index = 0;
};

/// One JSON object per event, written as a single line in the growth log.
nlohmann::json to_json(const GrowthEvent& e);

struct GrowthResult {
    LayerStack stack;
    OptimizerState opt;
    GrowthEvent event;
};

/// Deep-copies the window's layers (fresh uids, parent uids recorded) and
/// their AdamW moments. Inputs are not modified; the result shares no storage.
GrowthResult grow(const LayerStack& stack, const OptimizerState& opt, std::size_t b, Strategy strategy);
GrowthResult midas_grow(const LayerStack& stack, const OptimizerState& opt, std::size_t b);
GrowthResult lidas_grow(const LayerStack& stack, const OptimizerState& opt, std::size_t b);

/// PROP-alpha stage budgets T_i proportional to i^alpha, rounded by largest remainder
/// (ties to the later stage) so they sum to T exactly and never decrease for alpha >= 0.
std::vector<std::uint64_t> prop_schedule(std::size_t k, std::uint64_t T, double alpha);

struct GrowthPlan {
    Strategy strategy = Strategy::lidas;
    std::size_t block_size = 4;
    std::size_t initial_depth = 4;
    std::size_t final_depth = 16;
    double alpha = 1.0;
    std::uint64_t growth_budget = 17000;
    std::uint64_t total_budget = 20000;

    /// Throws ContractError when the invariants fail.
    void validate() const;
};

struct StagePlan {
    std::size_t stage = 1;  // 1-based
    std::size_t depth = 0;
    std::uint64_t steps = 0;           // includes cooldown_steps on the last stage
    std::uint64_t cooldown_steps = 0;
    bool grow_at_end = false;
};

std::vector<StagePlan> plan_run(const GrowthPlan& plan);

}  // namespace growlab
