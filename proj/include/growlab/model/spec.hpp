#pragma once

#include <cstddef>

#include "json.hpp"

namespace growlab {

/// Architecture hyperparameters. `n_layers` is the current depth of the
/// stack it describes; growth returns a spec with the new depth.
struct ModelSpec {
    std::size_t n_layers = 16;
    std::size_t d_model = 128;
    std::size_t d_ff = 512;
    std::size_t n_heads = 4;
    std::size_t vocab_size = 256;
    double rope_theta = 10000.0;
    std::size_t context_len = 640;
    bool ln_scaling = false;
    bool tied_embeddings = true;

    std::size_t head_dim() const { return d_model / n_heads; }

    /// Throws ContractError on inconsistent dimensions.
    void validate() const;

    bool operator==(const ModelSpec&) const = default;
};

nlohmann::json to_json(const ModelSpec& spec);
/// Strict: unknown or mistyped keys raise ConfigError naming `prefix.key`.
ModelSpec model_spec_from_json(const nlohmann::json& j, const std::string& prefix = "model");

}  // namespace growlab
