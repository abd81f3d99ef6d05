#include "growlab/model/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "growlab/util/errors.hpp"

namespace growlab {

namespace {

constexpr std::string_view kMagic = "GROWLAB1";

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(std::string_view in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
    return v;
}

void put_f32(std::string& out, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float get_f32(const char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return std::bit_cast<float>(bits);
}

std::string layer_key(std::uint64_t uid, std::string_view role) {
    return "layer." + std::to_string(uid) + "." + std::string(role);
}

}  // namespace

bool Container::has(std::string_view name) const {
    for (const auto& e : tensors) {
        if (e.name == name) return true;
    }
    return false;
}

const Tensor& Container::get(std::string_view name) const {
    for (const auto& e : tensors) {
        if (e.name == name) return e.tensor;
    }
    throw InputError("checkpoint has no tensor '" + std::string(name) + "'");
}

void Container::add(std::string name, std::string role, Tensor tensor) {
    if (has(name)) throw ContractError("duplicate checkpoint tensor '" + name + "'");
    tensors.push_back({std::move(name), std::move(role), std::move(tensor)});
}

std::string encode_container(const Container& c) {
    if (!c.meta.is_object()) throw ContractError("checkpoint meta must be a JSON object");
    if (c.meta.contains("tensors")) throw ContractError("'tensors' is reserved in checkpoint meta");
    nlohmann::json header = c.meta;
    nlohmann::json dir = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& e : c.tensors) {
        dir.push_back({{"name", e.name},
                       {"role", e.role},
                       {"shape", e.tensor.shape()},
                       {"offset", offset},
                       {"count", e.tensor.size()}});
        offset += 4 * e.tensor.size();
    }
    header["tensors"] = std::move(dir);
    const std::string text = header.dump();

    std::string out;
    out.reserve(16 + text.size() + offset);
    out.append(kMagic);
    put_u64(out, text.size());
    out.append(text);
    for (const auto& e : c.tensors) {
        for (float v : e.tensor.data()) put_f32(out, v);
    }
    return out;
}

Container decode_container(std::string_view bytes) {
    if (bytes.size() < 16 || bytes.substr(0, 8) != kMagic) throw InputError("not a growlab checkpoint");
    const std::uint64_t n = get_u64(bytes.substr(8, 8));
    if (n > bytes.size() - 16) throw InputError("checkpoint header truncated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(16, n));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("checkpoint header is not JSON: ") + e.what());
    }
    if (!header.is_object() || !header.contains("tensors") || !header["tensors"].is_array()) {
        throw InputError("checkpoint header lacks a tensor directory");
    }
    const std::string_view payload = bytes.substr(16 + n);
    Container c;
    try {
        for (const auto& d : header["tensors"]) {
            const auto shape = d.at("shape").get<Shape>();
            const auto count = d.at("count").get<std::uint64_t>();
            const auto offset = d.at("offset").get<std::uint64_t>();
            if (shape_size(shape) != count) throw InputError("checkpoint tensor shape/count mismatch");
            if (offset > payload.size() || 4 * count > payload.size() - offset) {
                throw InputError("checkpoint payload truncated");
            }
            std::vector<float> data(count);
            for (std::uint64_t i = 0; i < count; ++i) data[i] = get_f32(payload.data() + offset + 4 * i);
            c.tensors.push_back({d.at("name").get<std::string>(), d.at("role").get<std::string>(),
                                 Tensor(shape, std::move(data))});
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed checkpoint directory: ") + e.what());
    }
    header.erase("tensors");
    c.meta = std::move(header);
    return c;
}

void write_container(const std::filesystem::path& path, const Container& c) {
    const std::string bytes = encode_container(c);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw InputError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_container(buf.str());
}

void pack_stack(const LayerStack& stack, Container& into) {
    stack.validate();
    nlohmann::json uids = nlohmann::json::array();
    nlohmann::json parents = nlohmann::json::array();
    for (const auto& l : stack.layers) {
        uids.push_back(l.uid);
        parents.push_back(l.parent_uid ? nlohmann::json(*l.parent_uid) : nlohmann::json(nullptr));
    }
    into.meta["spec"] = to_json(stack.spec);
    into.meta["layer_uids"] = std::move(uids);
    into.meta["parent_uids"] = std::move(parents);
    into.meta["next_uid"] = stack.next_uid;
    into.add("embedding", "param", stack.embedding);
    into.add("final_norm", "param", stack.final_norm);
    for (const auto& l : stack.layers) {
        auto ts = l.tensors();
        for (std::size_t i = 0; i < kLayerRoles.size(); ++i) into.add(layer_key(l.uid, kLayerRoles[i]), "param", *ts[i]);
    }
}

LayerStack unpack_stack(const Container& c) {
    LayerStack s;
    try {
        s.spec = model_spec_from_json(c.meta.at("spec"), "spec");
        const auto uids = c.meta.at("layer_uids").get<std::vector<std::uint64_t>>();
        const auto& parents = c.meta.at("parent_uids");
        if (parents.size() != uids.size()) throw InputError("parent_uids length differs from layer_uids");
        s.next_uid = c.meta.at("next_uid").get<std::uint64_t>();
        s.embedding = c.get("embedding");
        s.final_norm = c.get("final_norm");
        for (std::size_t i = 0; i < uids.size(); ++i) {
            LayerParams l;
            l.uid = uids[i];
            if (!parents[i].is_null()) l.parent_uid = parents[i].get<std::uint64_t>();
            auto ts = l.tensors();
            for (std::size_t r = 0; r < kLayerRoles.size(); ++r) *ts[r] = c.get(layer_key(l.uid, kLayerRoles[r]));
            s.layers.push_back(std::move(l));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("checkpoint metadata malformed: ") + e.what());
    } catch (const ConfigError& e) {
        throw InputError(std::string("checkpoint spec invalid: ") + e.what());
    }
    try {
        s.validate();
    } catch (const ContractError& e) {
        throw InputError(std::string("checkpoint inconsistent: ") + e.what());
    }
    return s;
}

}  // namespace growlab
