#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "growlab/numerics/tape.hpp"

namespace growlab {

/// One tensor under test. `coords` lists flat indices to probe; empty means all.
template <typename T>
struct GradCheckTarget {
    BasicTensor<T>* tensor = nullptr;
    std::vector<std::size_t> coords;
};

/// Builds a scalar loss on `tape`; `params[i]` is the tape handle of target i.
template <typename T>
using LossBuilder = std::function<Var<T>(Tape<T>& tape, std::span<const Var<T>> params)>;

/// Max over probed coordinates of
///   |analytic - central_difference| / (|analytic| + |central_difference| + 1e-8).
/// Target tensors are perturbed in place and restored before returning.
/// Throws ContractError if the loss is not a single element or eps is outside [1e-5, 1e-2].
template <typename T>
double grad_check(const LossBuilder<T>& loss, std::span<GradCheckTarget<T>> targets, double eps);

/// Single-input convenience form: f maps the input handle to a scalar.
template <typename T>
double grad_check(const std::function<Var<T>(Var<T>)>& f, const BasicTensor<T>& x, double eps);

}  // namespace growlab
