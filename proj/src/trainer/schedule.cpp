#include "growlab/trainer/schedule.hpp"

#include <cmath>
#include <string>

#include "growlab/util/errors.hpp"

namespace growlab {

void LRSchedule::validate() const {
    if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) throw ContractError("peak learning rate must be positive");
    if (warmup_steps > decay_start || decay_start > total_steps) {
        throw ContractError("schedule requires warmup <= decay_start <= total");
    }
}

double lr_at(std::uint64_t s, const LRSchedule& sched) {
    sched.validate();
    if (s > sched.total_steps) {
        throw ContractError("step " + std::to_string(s) + " beyond schedule end " + std::to_string(sched.total_steps));
    }
    if (s < sched.warmup_steps) {
        return sched.peak_lr * static_cast<double>(s) / static_cast<double>(sched.warmup_steps);
    }
    if (s <= sched.decay_start) return sched.peak_lr;
    const double x = static_cast<double>(s - sched.decay_start) / static_cast<double>(sched.total_steps - sched.decay_start);
    return sched.peak_lr * (1.0 - std::sqrt(x));
}

}  // namespace growlab
