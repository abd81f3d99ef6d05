#include "growlab/model/spec.hpp"

#include <string>

#include "growlab/util/errors.hpp"
#include "growlab/util/json_fields.hpp"

namespace growlab {

void ModelSpec::validate() const {
    if (n_layers < 1) throw ContractError("model: n_layers must be >= 1");
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
        throw ContractError("model: d_model must be divisible by n_heads");
    }
    if (head_dim() % 2 != 0) throw ContractError("model: head dimension must be even for rotary embeddings");
    if (d_ff == 0 || vocab_size == 0 || context_len == 0) throw ContractError("model: sizes must be positive");
    if (!(rope_theta > 0.0)) throw ContractError("model: rope_theta must be positive");
    if (!tied_embeddings) throw ContractError("model: embeddings are always tied");
}

nlohmann::json to_json(const ModelSpec& spec) {
    return {{"n_layers", spec.n_layers},     {"d_model", spec.d_model},
            {"d_ff", spec.d_ff},             {"n_heads", spec.n_heads},
            {"vocab_size", spec.vocab_size}, {"rope_theta", spec.rope_theta},
            {"context_len", spec.context_len}, {"ln_scaling", spec.ln_scaling},
            {"tied_embeddings", spec.tied_embeddings}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j, const std::string& prefix) {
    JsonFields f(j, prefix);
    ModelSpec spec;
    f.get("n_layers", spec.n_layers);
    f.get("d_model", spec.d_model);
    f.get("d_ff", spec.d_ff);
    f.get("n_heads", spec.n_heads);
    f.get("vocab_size", spec.vocab_size);
    f.get("rope_theta", spec.rope_theta);
    f.get("context_len", spec.context_len);
    f.get("ln_scaling", spec.ln_scaling);
    f.get("tied_embeddings", spec.tied_embeddings);
    f.finish();
    try {
        spec.validate();
    } catch (const ContractError& e) {
        throw ConfigError(prefix, e.what());
    }
    return spec;
}

}  // namespace growlab
