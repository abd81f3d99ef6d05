#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "growlab/numerics/tape.hpp"

namespace growlab {

// Differentiable operations recorded on a Tape. 2-D operands are
// [rows, cols] row-major; "rows" are tokens for activations. Shape
// mismatches raise DimensionError.

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);       ///< a[M,K] * b[K,N]
template <typename T> Var<T> matmul_bt(Var<T> a, Var<T> b);    ///< a[M,K] * transpose(b[N,K])
template <typename T> Var<T> add(Var<T> a, Var<T> b);          ///< same shape
template <typename T> Var<T> add_bias(Var<T> x, Var<T> bias);  ///< x[N,D] + bias[D] per row
template <typename T> Var<T> mul(Var<T> a, Var<T> b);          ///< elementwise
template <typename T> Var<T> scale(Var<T> x, T factor);
template <typename T> Var<T> square(Var<T> x);
template <typename T> Var<T> sum(Var<T> x);                    ///< scalar of shape [1]

/// Row-wise softmax over the last axis with max subtraction.
template <typename T> Var<T> softmax(Var<T> x);

/// Residual update `h + c` on rows where keep[r] != 0, `h` elsewhere.
/// An empty `keep` keeps every row.
template <typename T> Var<T> masked_add(Var<T> h, Var<T> c, std::span<const char> keep);

/// RMSNorm: x * gain / sqrt(mean(x^2) + eps), then multiplied by `post_scale`.
template <typename T> Var<T> rmsnorm(Var<T> x, Var<T> gain, T post_scale);

/// Rotary embedding on [B*T, H*hd] activations, rotate-half pairing per head.
/// Row r sits at position r % seq_len.
template <typename T> Var<T> rope(Var<T> x, std::size_t seq_len, std::size_t n_heads, double theta);

/// Causal multi-head scaled dot-product attention over [B*T, H*hd] inputs.
template <typename T>
Var<T> causal_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t seq_len, std::size_t n_heads);

/// silu(gate) * up
template <typename T> Var<T> swiglu(Var<T> gate, Var<T> up);

/// Rows of table[V,D] selected by ids.
template <typename T> Var<T> embedding(Var<T> table, std::span<const int> ids);

/// Mean over rows of -log softmax(logits)[target].
template <typename T> Var<T> cross_entropy(Var<T> logits, std::span<const int> targets);

/// Mean over rows of -sum_j p_j log softmax(logits)_j for fixed target rows p.
template <typename T> Var<T> soft_cross_entropy(Var<T> logits, const BasicTensor<T>& target_probs);

/// Non-differentiable helpers shared with analysis code.
template <typename T> BasicTensor<T> softmax_rows(const BasicTensor<T>& logits);
template <typename T> std::vector<double> log_softmax_row(std::span<const T> logits);

}  // namespace growlab
