#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "growlab/growth/growth.hpp"
#include "growlab/model/spec.hpp"

namespace growlab {

/// Width parameters entering the FLOPs count. `kv_dim` is the total key/value
/// projection width (d_model for plain multi-head attention, smaller under GQA).
struct FlopsDims {
    std::size_t d_model = 0;
    std::size_t d_ff = 0;
    std::size_t vocab_size = 0;
    std::size_t seq_len = 0;
    std::size_t kv_dim = 0;

    static FlopsDims from_spec(const ModelSpec& spec, std::size_t seq_len);
};

/// Parameters of one layer: Q and O (d*d each), K and V (d*kv_dim each),
/// SwiGLU gate/up/down (3*d*d_ff) and two norm gains.
long double layer_params(const FlopsDims& dims);

/// Training FLOPs per token at `depth` layers:
///   6 * layer_params * depth + 6 * vocab * d_model + 12 * depth * d_model * seq_len
long double per_token_flops(const FlopsDims& dims, std::size_t depth);

/// Sum over stages of steps * tokens_per_step * per_token_flops(depth).
long double training_flops(const FlopsDims& dims, std::span<const StagePlan> stages, std::uint64_t tokens_per_step);

struct FlopsEstimate {
    long double total = 0;     // the given schedule
    long double baseline = 0;  // same number of steps at the deepest stage's depth throughout
    long double ratio = 0;     // baseline / total
};

FlopsEstimate flops_estimate(const FlopsDims& dims, std::span<const StagePlan> stages, std::uint64_t tokens_per_step);

}  // namespace growlab
