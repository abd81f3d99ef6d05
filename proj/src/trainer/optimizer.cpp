#include "growlab/trainer/optimizer.hpp"

#include <cmath>

#include "growlab/util/errors.hpp"

namespace growlab {

std::vector<NamedParam> named_params(LayerStack& stack) {
    std::vector<NamedParam> out;
    out.push_back({"embedding", &stack.embedding, true});
    out.push_back({"final_norm", &stack.final_norm, false});
    for (auto& l : stack.layers) {
        auto ts = l.tensors();
        for (std::size_t r = 0; r < kLayerRoles.size(); ++r) {
            out.push_back({"layer." + std::to_string(l.uid) + "." + std::string(kLayerRoles[r]), ts[r], ts[r]->rank() == 2});
        }
    }
    return out;
}

OptimizerState init_optimizer(const LayerStack& stack, double beta1, double beta2, double eps, double weight_decay) {
    OptimizerState opt;
    opt.beta1 = beta1;
    opt.beta2 = beta2;
    opt.eps = eps;
    opt.weight_decay = weight_decay;
    for (const auto& p : named_params(const_cast<LayerStack&>(stack))) {
        opt.moments[p.key] = {Tensor(p.tensor->shape()), Tensor(p.tensor->shape())};
    }
    return opt;
}

void adamw_step(std::span<const NamedParam> params, std::span<const Tensor> grads, OptimizerState& opt, double lr) {
    if (params.size() != grads.size()) throw ContractError("adamw_step: parameter and gradient counts differ");
    const std::uint64_t t = opt.step + 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
    const float b1 = static_cast<float>(opt.beta1), b2 = static_cast<float>(opt.beta2);
    const float step_size = static_cast<float>(lr / bc1);
    const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
    const float eps = static_cast<float>(opt.eps);

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i].tensor;
        const Tensor& g = grads[i];
        if (p.shape() != g.shape()) throw ContractError("adamw_step: gradient shape differs for " + params[i].key);
        auto it = opt.moments.find(params[i].key);
        if (it == opt.moments.end()) throw ContractError("adamw_step: no moments for " + params[i].key);
        Moments& mom = it->second;
        if (mom.m.shape() != p.shape() || mom.v.shape() != p.shape()) {
            throw ContractError("adamw_step: moment shape differs for " + params[i].key);
        }
        const float decay = params[i].decay ? static_cast<float>(1.0 - lr * opt.weight_decay) : 1.0f;
        float* pw = p.ptr();
        float* m = mom.m.ptr();
        float* v = mom.v.ptr();
        const float* gw = g.ptr();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = b1 * m[k] + (1.0f - b1) * gw[k];
            v[k] = b2 * v[k] + (1.0f - b2) * gw[k] * gw[k];
            const float denom = std::sqrt(v[k]) * inv_sqrt_bc2 + eps;
            pw[k] = pw[k] * decay - step_size * m[k] / denom;
        }
    }
    opt.step = t;
}

double clip_gradients(std::span<Tensor> grads, double max_norm) {
    if (!(max_norm > 0.0)) throw ContractError("clip_gradients: max_norm must be positive");
    // Eight interleaved partial sums keep the reduction order fixed but let it vectorize.
    double lanes[8] = {};
    for (const auto& g : grads) {
        const float* x = g.ptr();
        const std::size_t n = g.size(), full = n - n % 8;
        for (std::size_t i = 0; i < full; i += 8) {
            for (std::size_t l = 0; l < 8; ++l) lanes[l] += static_cast<double>(x[i + l]) * static_cast<double>(x[i + l]);
        }
        for (std::size_t i = full; i < n; ++i) lanes[0] += static_cast<double>(x[i]) * static_cast<double>(x[i]);
    }
    double ss = 0.0;
    for (double l : lanes) ss += l;
    const double norm = std::sqrt(ss);
    if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
    if (norm > max_norm) {
        const float factor = static_cast<float>(max_norm / norm);
        for (auto& g : grads) {
            for (auto& v : g.data()) v *= factor;
        }
    }
    return norm;
}

void pack_optimizer(const OptimizerState& opt, Container& into) {
    into.meta["optimizer"] = {{"beta1", opt.beta1},
                              {"beta2", opt.beta2},
                              {"eps", opt.eps},
                              {"weight_decay", opt.weight_decay},
                              {"step", opt.step}};
    for (const auto& [key, mom] : opt.moments) {
        into.add("adam_m." + key, "adam_m", mom.m);
        into.add("adam_v." + key, "adam_v", mom.v);
    }
}

OptimizerState unpack_optimizer(const Container& c) {
    if (!c.meta.contains("optimizer")) throw InputError("checkpoint carries no optimizer state");
    OptimizerState opt;
    try {
        const auto& o = c.meta.at("optimizer");
        opt.beta1 = o.at("beta1").get<double>();
        opt.beta2 = o.at("beta2").get<double>();
        opt.eps = o.at("eps").get<double>();
        opt.weight_decay = o.at("weight_decay").get<double>();
        opt.step = o.at("step").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("optimizer metadata malformed: ") + e.what());
    }
    for (const auto& e : c.tensors) {
        if (e.role == "adam_m") opt.moments[e.name.substr(7)].m = e.tensor;
        if (e.role == "adam_v") opt.moments[e.name.substr(7)].v = e.tensor;
    }
    return opt;
}

}  // namespace growlab
