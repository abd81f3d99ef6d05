#include "growlab/numerics/tape.hpp"

#include "growlab/util/errors.hpp"

namespace growlab {

template <typename T>
Var<T> Tape<T>::leaf(TensorT value) {
    Node& node = nodes_.emplace_back();
    node.requires_grad = value.requires_grad();
    node.owned = std::move(value);
    return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::parameter(const TensorT& borrowed) {
    Node& node = nodes_.emplace_back();
    node.borrowed = &borrowed;
    node.requires_grad = true;
    return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::input(const TensorT& borrowed) {
    Node& node = nodes_.emplace_back();
    node.borrowed = &borrowed;
    node.requires_grad = false;
    return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(TensorT value, std::initializer_list<std::size_t> parents, BackwardFn backward) {
    bool needs = false;
    for (std::size_t p : parents) {
        if (p >= nodes_.size()) throw ContractError("tape parent id out of range");
        needs = needs || nodes_[p].requires_grad;
    }
    Node& node = nodes_.emplace_back();
    node.owned = std::move(value);
    node.requires_grad = needs;
    if (needs) node.backward = std::move(backward);
    return {this, nodes_.size() - 1};
}

template <typename T>
const BasicTensor<T>& Tape<T>::value(std::size_t id) const {
    const Node& node = nodes_.at(id);
    return node.borrowed != nullptr ? *node.borrowed : node.owned;
}

template <typename T>
BasicTensor<T>& Tape<T>::grad(std::size_t id) {
    Node& node = nodes_.at(id);
    if (!node.grad_ready) {
        node.grad = TensorT(value(id).shape());
        node.grad_ready = true;
    }
    return node.grad;
}

template <typename T>
const BasicTensor<T>& Tape<T>::grad(std::size_t id) const {
    const Node& node = nodes_.at(id);
    if (!node.grad_ready) throw StateError("no gradient recorded for tape node " + std::to_string(id));
    return node.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> root) {
    if (root.tape != this) throw ContractError("backward root belongs to a different tape");
    if (value(root.id).size() != 1) {
        throw ContractError("backward requires a scalar root, got shape " + shape_string(value(root.id).shape()));
    }
    if (!nodes_[root.id].requires_grad) return;
    grad(root.id)[0] = T{1};
    for (std::size_t i = root.id + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (node.grad_ready && node.backward) node.backward(*this, i);
    }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace growlab
