#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "growlab/model/spec.hpp"
#include "growlab/numerics/tensor.hpp"

namespace growlab {

/// Parameter roles of one transformer layer, in storage order.
inline constexpr std::array<std::string_view, 9> kLayerRoles = {
    "wq", "wk", "wv", "wo", "w_gate", "w_up", "w_down", "attn_norm", "mlp_norm"};
/// Roles whose tensors make up the SwiGLU feedforward.
inline constexpr std::array<std::string_view, 3> kMlpRoles = {"w_gate", "w_up", "w_down"};

/// One layer's weights. Matrices are stored [in, out] and applied as x * W.
template <typename T>
struct BasicLayerParams {
    std::uint64_t uid = 0;
    std::optional<std::uint64_t> parent_uid;

    BasicTensor<T> wq, wk, wv, wo;        // [d, d]
    BasicTensor<T> w_gate, w_up;          // [d, d_ff]
    BasicTensor<T> w_down;                // [d_ff, d]
    BasicTensor<T> attn_norm, mlp_norm;   // [d]

    /// Tensors in kLayerRoles order.
    std::array<BasicTensor<T>*, 9> tensors();
    std::array<const BasicTensor<T>*, 9> tensors() const;
    BasicTensor<T>& tensor(std::string_view role);
    const BasicTensor<T>& tensor(std::string_view role) const;
};

/// Full parameter set: tied embedding, final norm gain and the ordered layers.
template <typename T>
struct BasicLayerStack {
    ModelSpec spec;
    BasicTensor<T> embedding;   // [vocab, d]; also the unembedding
    BasicTensor<T> final_norm;  // [d]
    std::vector<BasicLayerParams<T>> layers;
    std::uint64_t next_uid = 0;

    std::size_t depth() const noexcept { return layers.size(); }
    std::vector<std::uint64_t> uids() const;
    /// Index of the layer carrying `uid`; throws ContractError if absent.
    std::size_t index_of(std::uint64_t uid) const;
    /// Checks spec consistency and every tensor shape.
    void validate() const;

    template <typename U>
    BasicLayerStack<U> cast() const;
};

using LayerParams = BasicLayerParams<float>;
using LayerStack = BasicLayerStack<float>;

/// Fresh layer with uid `uid`, weights N(0, 0.02^2) drawn from a generator
/// seeded by (seed, "layer/<uid>"), gains 1.
template <typename T>
BasicLayerParams<T> init_layer(const ModelSpec& spec, std::uint64_t seed, std::uint64_t uid);

/// Stack of spec.n_layers layers with uids 0..L-1; embedding drawn from (seed, "embedding").
template <typename T>
BasicLayerStack<T> init_stack(const ModelSpec& spec, std::uint64_t seed);

/// Same shapes, every value zero (gains included).
template <typename T>
BasicLayerStack<T> zero_stack(const ModelSpec& spec);

extern template struct BasicLayerParams<float>;
extern template struct BasicLayerParams<double>;
extern template struct BasicLayerStack<float>;
extern template struct BasicLayerStack<double>;

}  // namespace growlab
