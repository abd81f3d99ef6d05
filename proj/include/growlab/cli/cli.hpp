#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "growlab/lens/lens.hpp"
#include "growlab/probe/probe.hpp"
#include "growlab/tasks/training_data.hpp"
#include "growlab/trainer/config.hpp"
#include "json.hpp"

namespace growlab::cli {

/// Stable process exit codes.
enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kNumeric = 3, kMissing = 4 };

inline constexpr const char* kToolVersion = "growlab 0.1.0";

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

struct ManifestEntry {
    std::string path;  // relative to the manifest's directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct ExperimentManifest {
    std::string run_id;
    std::string config;  // relative path of the resolved config
    std::uint64_t seed = 0;
    std::string tool_version = kToolVersion;
    std::vector<ManifestEntry> artifacts;
};

/// Hashes every regular file under `dir` (sorted, manifest.json excluded).
ExperimentManifest build_manifest(const std::filesystem::path& dir, std::string run_id, std::string config,
                                  std::uint64_t seed);
nlohmann::json to_json(const ExperimentManifest& m);
void write_manifest(const std::filesystem::path& dir, const ExperimentManifest& m);
/// Paths of listed artifacts that are missing or whose hash differs.
std::vector<std::string> verify_manifest(const std::filesystem::path& dir);

/// First free `<parent>/<stem>_s<seed>_<NNN>`, created; never reuses a directory.
std::filesystem::path next_run_dir(const std::filesystem::path& parent, const std::string& stem, std::uint64_t seed);

/// A checkpoint with the run configuration it came from (defaults when absent).
struct LoadedModel {
    LayerStack stack;
    RunConfig config;
    Container container;
    mutable std::shared_ptr<const PreparedData> data;  // filled on first use
};

/// The run's corpus splits, rebuilt from its data config and seed.
const PreparedData& data_of(const LoadedModel& m);
/// Missing files raise MissingPrerequisite.
LoadedModel load_model(const std::filesystem::path& checkpoint);

struct AnalysisOptions {
    std::size_t n_prompts = 8;
    std::size_t prompt_len = 0;  // 0: the run's seq_len
    std::size_t n_items = 20;
    std::size_t k_shot = 5;
    LensConfig lens;
    HeatmapOptions heatmap;
    std::size_t block = 0;  // 0: the run's growth block size
    std::optional<std::filesystem::path> lens_path;
};

/// Evenly spaced windows of the held-out split.
std::vector<std::vector<int>> analysis_prompts(const LoadedModel& m, const AnalysisOptions& o);

/// Runs one named analysis into `out`; returns the files written.
std::vector<std::filesystem::path> analyze(const LoadedModel& m, const std::string& analysis,
                                           const std::filesystem::path& out, const AnalysisOptions& o);

struct EvalResult {
    Family family = Family::copy_random;
    std::size_t n = 0;
    std::size_t k_shot = 0;
    double accuracy = 0;
    double chance = 0;
    std::size_t skip_count = 0;
    std::optional<InterventionSpec> spec;
};
nlohmann::json to_json(const EvalResult& r);
EvalResult evaluate(const LoadedModel& m, Family family, std::size_t n, std::size_t k_shot, std::uint64_t seed,
                    const std::optional<InterventionSpec>& spec);

/// Full analysis bundle of one checkpoint under `out`; returns a summary object.
nlohmann::json report_bundle(const LoadedModel& m, const std::filesystem::path& out, const AnalysisOptions& o);
/// comparison.csv / comparison.json between a baseline and a grown run's summaries.
void write_comparison(const std::filesystem::path& out, const std::string& baseline_id, const nlohmann::json& baseline,
                      const std::string& grown_id, const nlohmann::json& grown);

/// Entry point shared by the executable and the tests. Never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace growlab::cli
