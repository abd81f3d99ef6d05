#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include "growlab/model/layer_stack.hpp"
#include "growlab/numerics/tape.hpp"

namespace growlab {

/// One executed position in the network: which stored layer runs there and
/// the 1-based depth used for LN-Scaling.
struct LayerSlot {
    std::size_t layer = 0;
    std::size_t depth = 1;

    bool operator==(const LayerSlot&) const = default;
};

/// Order in which layers execute. Interventions rewrite the plan; the
/// parameters themselves are never touched.
struct ExecutionPlan {
    std::vector<LayerSlot> slots;

    static ExecutionPlan identity(std::size_t n_layers);
    bool operator==(const ExecutionPlan&) const = default;
};

enum class Unit { layer, attention, mlp };

/// Removes a slot's residual update. With `upto` set, only positions <= upto
/// lose the update (future regime); otherwise every position does.
struct Ablation {
    std::size_t slot = 0;
    Unit unit = Unit::layer;
    std::optional<std::size_t> upto;
};

/// Parameters placed on a tape, either as gradient-tracked leaves or as constants.
template <typename T>
struct BoundStack {
    const BasicLayerStack<T>* stack = nullptr;
    Tape<T>* tape = nullptr;
    Var<T> embedding;
    Var<T> final_norm;
    std::vector<std::array<Var<T>, 9>> layers;  // kLayerRoles order
};

template <typename T>
BoundStack<T> bind(Tape<T>& tape, const BasicLayerStack<T>& stack, bool track_grad);

template <typename T>
struct LayerVars {
    Var<T> a;      // attention update
    Var<T> m;      // MLP update
    Var<T> h_mid;  // h + a (masked)
    Var<T> h_out;  // h_mid + m (masked)
};

/// One pre-norm layer on [B*seq_len, d] activations. Empty masks keep every row.
template <typename T>
LayerVars<T> layer_forward(const BoundStack<T>& bound, std::size_t layer, std::size_t depth, Var<T> h,
                           std::size_t seq_len, std::span<const char> keep_attn = {},
                           std::span<const char> keep_mlp = {});

template <typename T>
Var<T> embed(const BoundStack<T>& bound, std::span<const int> tokens);

/// Final RMSNorm (never LN-scaled) followed by the tied projection onto the vocabulary.
template <typename T>
Var<T> unembed(const BoundStack<T>& bound, Var<T> h);

/// Per-slot residual records of a single forward pass, rows = positions.
template <typename T>
struct ForwardTrace {
    std::size_t seq_len = 0;
    std::vector<BasicTensor<T>> h;  // h[i] is the input of slot i; h[L] is the final hidden state
    std::vector<BasicTensor<T>> a;
    std::vector<BasicTensor<T>> m;

    std::size_t depth() const noexcept { return a.size(); }
};

struct ForwardOptions {
    const ExecutionPlan* plan = nullptr;  // identity when null
    std::span<const Ablation> ablations;
};

/// Records the whole network on the tape and returns logits [B*seq_len, vocab].
/// `seq_len` 0 means a single sequence of tokens.size().
template <typename T>
Var<T> forward_graph(const BoundStack<T>& bound, std::span<const int> tokens, std::size_t seq_len,
                     const ForwardOptions& options = {}, ForwardTrace<T>* trace = nullptr);

template <typename T>
struct ForwardOutput {
    BasicTensor<T> logits;
    std::optional<ForwardTrace<T>> trace;
};

/// Gradient-free forward of one sequence.
template <typename T>
ForwardOutput<T> forward(const BasicLayerStack<T>& stack, std::span<const int> tokens, bool want_trace,
                         const ForwardOptions& options = {});

/// RMSNorm with gain, scaled by 1/sqrt(l) when ln_scaling is on. l is 1-based.
template <typename T>
BasicTensor<T> apply_norm(const BasicTensor<T>& h, const BasicTensor<T>& gain, std::size_t l, bool ln_scaling);

/// LN-Scaling factor for 1-based depth l.
template <typename T>
T ln_scale(std::size_t l, bool ln_scaling);

/// (a_i, m_i, h_i) as recorded. Throws StateError without a trace.
template <typename T>
std::tuple<const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&> sublayer_outputs(
    const std::optional<ForwardTrace<T>>& trace, std::size_t i);

}  // namespace growlab
