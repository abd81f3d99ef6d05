#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "growlab/model/layer_stack.hpp"
#include "json.hpp"

namespace growlab {

// Checkpoint container layout:
//
//   bytes 0..7    magic "GROWLAB1"
//   bytes 8..15   header length N, unsigned 64-bit little-endian
//   next N bytes  UTF-8 JSON header
//   remainder     tensor payloads, float32 little-endian, back to back
//
// The header is the caller's metadata object plus a "tensors" array of
// {name, role, shape, offset, count}; offsets are in bytes from the start
// of the payload area. Encoding is deterministic, so decode followed by
// encode reproduces the input bytes exactly.

struct TensorEntry {
    std::string name;
    std::string role;  // e.g. "param", "adam_m", "adam_v", "lens"
    Tensor tensor;
};

struct Container {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<TensorEntry> tensors;

    bool has(std::string_view name) const;
    /// Throws InputError when absent.
    const Tensor& get(std::string_view name) const;
    void add(std::string name, std::string role, Tensor tensor);
};

std::string encode_container(const Container& c);
/// Throws InputError on a malformed or truncated container.
Container decode_container(std::string_view bytes);

/// Writes through a temporary file and renames, so readers never see a partial file.
void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

/// Model parameters as tensors "embedding", "final_norm", "layer.<uid>.<role>" (role tag "param")
/// and meta keys spec, layer_uids, parent_uids, next_uid.
void pack_stack(const LayerStack& stack, Container& into);
LayerStack unpack_stack(const Container& c);

}  // namespace growlab
