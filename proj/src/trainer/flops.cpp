#include "growlab/trainer/flops.hpp"

#include <algorithm>

#include "growlab/util/errors.hpp"

namespace growlab {

FlopsDims FlopsDims::from_spec(const ModelSpec& spec, std::size_t seq_len) {
    return {spec.d_model, spec.d_ff, spec.vocab_size, seq_len, spec.d_model};
}

long double layer_params(const FlopsDims& dims) {
    const long double d = dims.d_model, kv = dims.kv_dim, f = dims.d_ff;
    return 2 * d * d + 2 * d * kv + 3 * d * f + 2 * d;
}

long double per_token_flops(const FlopsDims& dims, std::size_t depth) {
    const long double L = depth;
    return 6 * layer_params(dims) * L + 6.0L * dims.vocab_size * dims.d_model +
           12 * L * static_cast<long double>(dims.d_model) * dims.seq_len;
}

long double training_flops(const FlopsDims& dims, std::span<const StagePlan> stages, std::uint64_t tokens_per_step) {
    long double total = 0;
    for (const auto& s : stages) {
        total += static_cast<long double>(s.steps) * tokens_per_step * per_token_flops(dims, s.depth);
    }
    return total;
}

FlopsEstimate flops_estimate(const FlopsDims& dims, std::span<const StagePlan> stages, std::uint64_t tokens_per_step) {
    if (stages.empty()) throw ContractError("flops_estimate needs at least one stage");
    std::size_t final_depth = 0;
    std::uint64_t steps = 0;
    for (const auto& s : stages) {
        final_depth = std::max(final_depth, s.depth);
        steps += s.steps;
    }
    const StagePlan flat{1, final_depth, steps, 0, false};
    FlopsEstimate e;
    e.total = training_flops(dims, stages, tokens_per_step);
    e.baseline = training_flops(dims, std::span<const StagePlan>(&flat, 1), tokens_per_step);
    e.ratio = e.total > 0 ? e.baseline / e.total : 0;
    return e;
}

}  // namespace growlab
