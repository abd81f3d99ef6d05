#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <vector>

#include "growlab/numerics/tensor.hpp"

namespace growlab {

template <typename T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const BasicTensor<T>& value() const { return tape->value(id); }
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const { return tape->requires_grad(id); }
};

/// Reverse-mode autodiff record.
///
/// Nodes are appended in evaluation order, so reverse creation order is a
/// valid topological order for backward. A node whose inputs need no
/// gradient keeps no backward closure. Parameter leaves may *borrow* a
/// tensor owned elsewhere (the caller keeps it alive for the tape's life),
/// which lets training and analysis share weights without copying.
template <typename T>
class Tape {
public:
    using TensorT = BasicTensor<T>;
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Owned leaf; gradient tracked iff `value.requires_grad()`.
    Var<T> leaf(TensorT value);
    /// Borrowed leaf with gradient tracking.
    Var<T> parameter(const TensorT& borrowed);
    /// Borrowed leaf without gradient tracking.
    Var<T> input(const TensorT& borrowed);

    /// Appends an op result. The closure is dropped when no parent needs gradients.
    Var<T> record(TensorT value, std::initializer_list<std::size_t> parents, BackwardFn backward);

    const TensorT& value(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    bool has_grad(std::size_t id) const { return nodes_.at(id).grad_ready; }
    /// Gradient buffer, zero-allocated on first access.
    TensorT& grad(std::size_t id);
    const TensorT& grad(std::size_t id) const;

    /// Seeds d(root)/d(root) = 1 for a single-element root and runs backward.
    void backward(Var<T> root);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        TensorT owned;
        const TensorT* borrowed = nullptr;
        TensorT grad;
        bool requires_grad = false;
        bool grad_ready = false;
        BackwardFn backward;
    };

    std::deque<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace growlab
