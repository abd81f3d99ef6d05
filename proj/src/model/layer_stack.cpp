#include "growlab/model/layer_stack.hpp"

#include <string>

#include "growlab/numerics/rng.hpp"
#include "growlab/util/errors.hpp"

namespace growlab {

namespace {

constexpr double kInitStd = 0.02;

template <typename T>
BasicTensor<T> normal_tensor(Shape shape, Rng& rng) {
    BasicTensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(rng.normal() * kInitStd);
    return t;
}

template <typename T>
void expect_shape(const BasicTensor<T>& t, const Shape& shape, const std::string& what) {
    if (t.shape() != shape) {
        throw DimensionError(what + " has shape " + shape_string(t.shape()) + ", expected " + shape_string(shape));
    }
}

template <typename U, typename T>
BasicLayerParams<U> cast_layer(const BasicLayerParams<T>& in) {
    BasicLayerParams<U> out;
    out.uid = in.uid;
    out.parent_uid = in.parent_uid;
    auto src = in.tensors();
    auto dst = out.tensors();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
    return out;
}

}  // namespace

template <typename T>
std::array<BasicTensor<T>*, 9> BasicLayerParams<T>::tensors() {
    return {&wq, &wk, &wv, &wo, &w_gate, &w_up, &w_down, &attn_norm, &mlp_norm};
}

template <typename T>
std::array<const BasicTensor<T>*, 9> BasicLayerParams<T>::tensors() const {
    return {&wq, &wk, &wv, &wo, &w_gate, &w_up, &w_down, &attn_norm, &mlp_norm};
}

template <typename T>
BasicTensor<T>& BasicLayerParams<T>::tensor(std::string_view role) {
    auto all = tensors();
    for (std::size_t i = 0; i < kLayerRoles.size(); ++i) {
        if (kLayerRoles[i] == role) return *all[i];
    }
    throw ContractError("unknown layer role '" + std::string(role) + "'");
}

template <typename T>
const BasicTensor<T>& BasicLayerParams<T>::tensor(std::string_view role) const {
    return const_cast<BasicLayerParams<T>*>(this)->tensor(role);
}

template <typename T>
std::vector<std::uint64_t> BasicLayerStack<T>::uids() const {
    std::vector<std::uint64_t> out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.push_back(l.uid);
    return out;
}

template <typename T>
std::size_t BasicLayerStack<T>::index_of(std::uint64_t uid) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].uid == uid) return i;
    }
    throw ContractError("no layer with uid " + std::to_string(uid));
}

template <typename T>
void BasicLayerStack<T>::validate() const {
    spec.validate();
    if (spec.n_layers != layers.size()) {
        throw ContractError("spec depth " + std::to_string(spec.n_layers) + " != " + std::to_string(layers.size()) +
                            " layers");
    }
    const std::size_t d = spec.d_model, f = spec.d_ff;
    expect_shape(embedding, {spec.vocab_size, d}, "embedding");
    expect_shape(final_norm, {d}, "final_norm");
    for (const auto& l : layers) {
        const std::string tag = "layer " + std::to_string(l.uid) + " ";
        expect_shape(l.wq, {d, d}, tag + "wq");
        expect_shape(l.wk, {d, d}, tag + "wk");
        expect_shape(l.wv, {d, d}, tag + "wv");
        expect_shape(l.wo, {d, d}, tag + "wo");
        expect_shape(l.w_gate, {d, f}, tag + "w_gate");
        expect_shape(l.w_up, {d, f}, tag + "w_up");
        expect_shape(l.w_down, {f, d}, tag + "w_down");
        expect_shape(l.attn_norm, {d}, tag + "attn_norm");
        expect_shape(l.mlp_norm, {d}, tag + "mlp_norm");
        if (l.uid >= next_uid) throw ContractError(tag + "uid not below next_uid");
    }
}

template <typename T>
template <typename U>
BasicLayerStack<U> BasicLayerStack<T>::cast() const {
    BasicLayerStack<U> out;
    out.spec = spec;
    out.embedding = embedding.template cast<U>();
    out.final_norm = final_norm.template cast<U>();
    out.next_uid = next_uid;
    out.layers.reserve(layers.size());
    for (const auto& l : layers) out.layers.push_back(cast_layer<U>(l));
    return out;
}

template <typename T>
BasicLayerParams<T> init_layer(const ModelSpec& spec, std::uint64_t seed, std::uint64_t uid) {
    Rng rng(derive_seed(seed, "layer/" + std::to_string(uid)));
    const std::size_t d = spec.d_model, f = spec.d_ff;
    BasicLayerParams<T> l;
    l.uid = uid;
    l.wq = normal_tensor<T>({d, d}, rng);
    l.wk = normal_tensor<T>({d, d}, rng);
    l.wv = normal_tensor<T>({d, d}, rng);
    l.wo = normal_tensor<T>({d, d}, rng);
    l.w_gate = normal_tensor<T>({d, f}, rng);
    l.w_up = normal_tensor<T>({d, f}, rng);
    l.w_down = normal_tensor<T>({f, d}, rng);
    l.attn_norm = BasicTensor<T>::full({d}, T{1});
    l.mlp_norm = BasicTensor<T>::full({d}, T{1});
    return l;
}

template <typename T>
BasicLayerStack<T> init_stack(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    BasicLayerStack<T> s;
    s.spec = spec;
    Rng rng(derive_seed(seed, "embedding"));
    s.embedding = normal_tensor<T>({spec.vocab_size, spec.d_model}, rng);
    s.final_norm = BasicTensor<T>::full({spec.d_model}, T{1});
    for (std::size_t i = 0; i < spec.n_layers; ++i) s.layers.push_back(init_layer<T>(spec, seed, i));
    s.next_uid = spec.n_layers;
    return s;
}

template <typename T>
BasicLayerStack<T> zero_stack(const ModelSpec& spec) {
    BasicLayerStack<T> s = init_stack<T>(spec, 0);
    for (auto& v : s.embedding.data()) v = T{0};
    for (auto& v : s.final_norm.data()) v = T{0};
    for (auto& l : s.layers) {
        for (auto* t : l.tensors()) {
            for (auto& v : t->data()) v = T{0};
        }
    }
    return s;
}

template struct BasicLayerParams<float>;
template struct BasicLayerParams<double>;
template struct BasicLayerStack<float>;
template struct BasicLayerStack<double>;
template BasicLayerStack<double> BasicLayerStack<float>::cast<double>() const;
template BasicLayerStack<float> BasicLayerStack<double>::cast<float>() const;
template BasicLayerStack<float> BasicLayerStack<float>::cast<float>() const;
template BasicLayerParams<float> init_layer<float>(const ModelSpec&, std::uint64_t, std::uint64_t);
template BasicLayerParams<double> init_layer<double>(const ModelSpec&, std::uint64_t, std::uint64_t);
template BasicLayerStack<float> init_stack<float>(const ModelSpec&, std::uint64_t);
template BasicLayerStack<double> init_stack<double>(const ModelSpec&, std::uint64_t);
template BasicLayerStack<float> zero_stack<float>(const ModelSpec&);
template BasicLayerStack<double> zero_stack<double>(const ModelSpec&);

}  // namespace growlab
