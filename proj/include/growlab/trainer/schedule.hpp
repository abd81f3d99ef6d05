#pragma once

#include <cstdint>

namespace growlab {

/// Trapezoid: linear warmup to peak, plateau, then 1-sqrt decay to zero.
struct LRSchedule {
    double peak_lr = 3e-3;
    std::uint64_t warmup_steps = 200;
    std::uint64_t decay_start = 17000;
    std::uint64_t total_steps = 20000;

    /// Throws ContractError unless warmup <= decay_start <= total and peak > 0.
    void validate() const;
};

/// Learning rate at global step s in [0, total]; throws ContractError outside.
double lr_at(std::uint64_t s, const LRSchedule& sched);

}  // namespace growlab
