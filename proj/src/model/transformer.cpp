#include "growlab/model/transformer.hpp"

#include <cmath>
#include <string>

#include "growlab/numerics/ops.hpp"
#include "growlab/util/errors.hpp"

namespace growlab {

namespace {

enum RoleIndex : std::size_t { kWq, kWk, kWv, kWo, kGate, kUp, kDown, kAttnNorm, kMlpNorm };

void fill_mask(std::vector<char>& mask, std::size_t rows, std::size_t seq_len, const std::optional<std::size_t>& upto) {
    if (mask.empty()) mask.assign(rows, 1);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!upto || r % seq_len <= *upto) mask[r] = 0;
    }
}

}  // namespace

ExecutionPlan ExecutionPlan::identity(std::size_t n_layers) {
    ExecutionPlan plan;
    plan.slots.reserve(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) plan.slots.push_back({i, i + 1});
    return plan;
}

template <typename T>
T ln_scale(std::size_t l, bool ln_scaling) {
    if (l < 1) throw ContractError("layer index for normalization is 1-based, got 0");
    if (!ln_scaling) return T{1};
    return static_cast<T>(1.0 / std::sqrt(static_cast<double>(l)));
}

template <typename T>
BoundStack<T> bind(Tape<T>& tape, const BasicLayerStack<T>& stack, bool track_grad) {
    BoundStack<T> b;
    b.stack = &stack;
    b.tape = &tape;
    auto put = [&](const BasicTensor<T>& t) { return track_grad ? tape.parameter(t) : tape.input(t); };
    b.embedding = put(stack.embedding);
    b.final_norm = put(stack.final_norm);
    b.layers.reserve(stack.layers.size());
    for (const auto& l : stack.layers) {
        std::array<Var<T>, 9> vars;
        auto ts = l.tensors();
        for (std::size_t i = 0; i < ts.size(); ++i) vars[i] = put(*ts[i]);
        b.layers.push_back(vars);
    }
    return b;
}

template <typename T>
LayerVars<T> layer_forward(const BoundStack<T>& bound, std::size_t layer, std::size_t depth, Var<T> h,
                           std::size_t seq_len, std::span<const char> keep_attn, std::span<const char> keep_mlp) {
    const ModelSpec& spec = bound.stack->spec;
    if (layer >= bound.layers.size()) throw ContractError("layer index out of range");
    const auto& p = bound.layers[layer];
    const T s = ln_scale<T>(depth, spec.ln_scaling);

    auto x = rmsnorm(h, p[kAttnNorm], s);
    auto q = rope(matmul(x, p[kWq]), seq_len, spec.n_heads, spec.rope_theta);
    auto k = rope(matmul(x, p[kWk]), seq_len, spec.n_heads, spec.rope_theta);
    auto v = matmul(x, p[kWv]);
    auto a = matmul(causal_attention(q, k, v, seq_len, spec.n_heads), p[kWo]);
    auto h_mid = masked_add(h, a, keep_attn);

    auto y = rmsnorm(h_mid, p[kMlpNorm], s);
    auto m = matmul(swiglu(matmul(y, p[kGate]), matmul(y, p[kUp])), p[kDown]);
    auto h_out = masked_add(h_mid, m, keep_mlp);
    return {a, m, h_mid, h_out};
}

template <typename T>
Var<T> embed(const BoundStack<T>& bound, std::span<const int> tokens) {
    return embedding(bound.embedding, tokens);
}

template <typename T>
Var<T> unembed(const BoundStack<T>& bound, Var<T> h) {
    return matmul_bt(rmsnorm(h, bound.final_norm, T{1}), bound.embedding);
}

template <typename T>
Var<T> forward_graph(const BoundStack<T>& bound, std::span<const int> tokens, std::size_t seq_len,
                     const ForwardOptions& options, ForwardTrace<T>* trace) {
    const ModelSpec& spec = bound.stack->spec;
    if (seq_len == 0) seq_len = tokens.size();
    if (tokens.empty() || tokens.size() % seq_len != 0) {
        throw InputError("token count " + std::to_string(tokens.size()) + " is not a positive multiple of " +
                         std::to_string(seq_len));
    }
    if (seq_len > spec.context_len) {
        throw InputError("sequence length " + std::to_string(seq_len) + " exceeds context " +
                         std::to_string(spec.context_len));
    }
    for (int t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= spec.vocab_size) {
            throw InputError("token id " + std::to_string(t) + " outside vocabulary of " +
                             std::to_string(spec.vocab_size));
        }
    }

    const ExecutionPlan fallback = options.plan ? ExecutionPlan{} : ExecutionPlan::identity(bound.layers.size());
    const ExecutionPlan& plan = options.plan ? *options.plan : fallback;
    const std::size_t rows = tokens.size();
    for (const auto& ab : options.ablations) {
        if (ab.slot >= plan.slots.size()) throw ContractError("ablation slot out of range");
    }

    if (trace != nullptr) {
        *trace = ForwardTrace<T>{};
        trace->seq_len = seq_len;
    }

    Var<T> h = embed(bound, tokens);
    std::vector<char> keep_attn, keep_mlp;
    for (std::size_t i = 0; i < plan.slots.size(); ++i) {
        keep_attn.clear();
        keep_mlp.clear();
        for (const auto& ab : options.ablations) {
            if (ab.slot != i) continue;
            if (ab.unit != Unit::mlp) fill_mask(keep_attn, rows, seq_len, ab.upto);
            if (ab.unit != Unit::attention) fill_mask(keep_mlp, rows, seq_len, ab.upto);
        }
        const auto& slot = plan.slots[i];
        auto out = layer_forward(bound, slot.layer, slot.depth, h, seq_len, keep_attn, keep_mlp);
        if (trace != nullptr) {
            trace->h.push_back(h.value());
            trace->a.push_back(out.a.value());
            trace->m.push_back(out.m.value());
        }
        h = out.h_out;
    }
    if (trace != nullptr) trace->h.push_back(h.value());
    return unembed(bound, h);
}

template <typename T>
ForwardOutput<T> forward(const BasicLayerStack<T>& stack, std::span<const int> tokens, bool want_trace,
                         const ForwardOptions& options) {
    Tape<T> tape;
    auto bound = bind(tape, stack, false);
    ForwardOutput<T> out;
    if (want_trace) out.trace.emplace();
    out.logits = forward_graph(bound, tokens, 0, options, want_trace ? &*out.trace : nullptr).value();
    return out;
}

template <typename T>
BasicTensor<T> apply_norm(const BasicTensor<T>& h, const BasicTensor<T>& gain, std::size_t l, bool ln_scaling) {
    const T s = ln_scale<T>(l, ln_scaling);
    Tape<T> tape;
    return rmsnorm(tape.input(h), tape.input(gain), s).value();
}

template <typename T>
std::tuple<const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&> sublayer_outputs(
    const std::optional<ForwardTrace<T>>& trace, std::size_t i) {
    if (!trace) throw StateError("forward was run without a trace");
    if (i >= trace->depth()) throw ContractError("layer " + std::to_string(i) + " outside traced depth");
    return {trace->a[i], trace->m[i], trace->h[i]};
}

#define GROWLAB_INSTANTIATE_MODEL(T)                                                                            \
    template T ln_scale<T>(std::size_t, bool);                                                                  \
    template BoundStack<T> bind<T>(Tape<T>&, const BasicLayerStack<T>&, bool);                                  \
    template LayerVars<T> layer_forward<T>(const BoundStack<T>&, std::size_t, std::size_t, Var<T>, std::size_t, \
                                           std::span<const char>, std::span<const char>);                       \
    template Var<T> embed<T>(const BoundStack<T>&, std::span<const int>);                                       \
    template Var<T> unembed<T>(const BoundStack<T>&, Var<T>);                                                   \
    template Var<T> forward_graph<T>(const BoundStack<T>&, std::span<const int>, std::size_t,                   \
                                     const ForwardOptions&, ForwardTrace<T>*);                                  \
    template ForwardOutput<T> forward<T>(const BasicLayerStack<T>&, std::span<const int>, bool,                 \
                                         const ForwardOptions&);                                                \
    template BasicTensor<T> apply_norm<T>(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t, bool);     \
    template std::tuple<const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&>                    \
    sublayer_outputs<T>(const std::optional<ForwardTrace<T>>&, std::size_t);

GROWLAB_INSTANTIATE_MODEL(float)
GROWLAB_INSTANTIATE_MODEL(double)

#undef GROWLAB_INSTANTIATE_MODEL

}  // namespace growlab
