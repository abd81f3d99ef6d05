#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include "growlab/cli/cli.hpp"
#include "growlab/util/errors.hpp"

namespace growlab::cli {

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

ExperimentManifest build_manifest(const std::filesystem::path& dir, std::string run_id, std::string config,
                                  std::uint64_t seed) {
    ExperimentManifest m;
    m.run_id = std::move(run_id);
    m.config = std::move(config);
    m.seed = seed;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        m.artifacts.push_back(
            {std::filesystem::relative(f, dir).generic_string(), sha256_file(f), std::filesystem::file_size(f)});
    }
    return m;
}

nlohmann::json to_json(const ExperimentManifest& m) {
    nlohmann::json arts = nlohmann::json::array();
    for (const auto& a : m.artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
    return {{"run_id", m.run_id},
            {"config", m.config},
            {"seed", m.seed},
            {"tool_version", m.tool_version},
            {"artifacts", std::move(arts)}};
}

void write_manifest(const std::filesystem::path& dir, const ExperimentManifest& m) {
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw InputError("cannot write manifest in " + dir.string());
    out << to_json(m).dump(2) << "\n";
}

std::vector<std::string> verify_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw MissingPrerequisite("no manifest.json in " + dir.string(), "rerun the command that produced it");
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("artifacts")) throw InputError("malformed manifest in " + dir.string());
    std::vector<std::string> bad;
    for (const auto& a : j.at("artifacts")) {
        const auto rel = a.at("path").get<std::string>();
        const auto p = dir / rel;
        if (!std::filesystem::is_regular_file(p) || sha256_file(p) != a.at("sha256").get<std::string>()) {
            bad.push_back(rel);
        }
    }
    return bad;
}

std::filesystem::path next_run_dir(const std::filesystem::path& parent, const std::string& stem, std::uint64_t seed) {
    std::filesystem::create_directories(parent);
    for (unsigned n = 0; n < 1000; ++n) {
        char suffix[8];
        std::snprintf(suffix, sizeof suffix, "%03u", n);
        const auto dir = parent / (stem + "_s" + std::to_string(seed) + "_" + suffix);
        if (std::filesystem::create_directory(dir)) return dir;
    }
    throw InputError("no free run directory for " + stem + " under " + parent.string());
}

}  // namespace growlab::cli
