#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "growlab/model/checkpoint.hpp"
#include "growlab/model/layer_stack.hpp"

namespace growlab {

/// A trainable tensor and the key its optimizer moments live under:
/// "embedding", "final_norm" or "layer.<uid>.<role>".
struct NamedParam {
    std::string key;
    Tensor* tensor = nullptr;
    bool decay = true;  // weight decay applies to matrices, not to gains
};

/// Embedding, final norm, then each layer's tensors in kLayerRoles order.
std::vector<NamedParam> named_params(LayerStack& stack);

struct Moments {
    Tensor m;
    Tensor v;
};

/// AdamW state. Moments are keyed like NamedParam::key, so a copied layer's
/// moments travel with its uid.
struct OptimizerState {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::uint64_t step = 0;
    std::map<std::string, Moments> moments;
};

/// Zero moments for every parameter of `stack`.
OptimizerState init_optimizer(const LayerStack& stack, double beta1 = 0.9, double beta2 = 0.95, double eps = 1e-8,
                              double weight_decay = 0.01);

/// One AdamW step (decoupled weight decay, bias-corrected moments) over
/// parallel lists of parameters and gradients; increments opt.step.
/// Throws ContractError on shape mismatches or missing moments.
void adamw_step(std::span<const NamedParam> params, std::span<const Tensor> grads, OptimizerState& opt, double lr);

/// Global L2 norm over all gradients (accumulated in double, in order).
/// Scales every gradient by max_norm / norm when norm > max_norm. Returns the
/// norm before clipping; NaN/Inf gradients raise NumericError.
double clip_gradients(std::span<Tensor> grads, double max_norm = 1.0);

/// Moments as container tensors "adam_m.<key>" / "adam_v.<key>" plus meta "optimizer".
void pack_optimizer(const OptimizerState& opt, Container& into);
OptimizerState unpack_optimizer(const Container& c);

}  // namespace growlab
