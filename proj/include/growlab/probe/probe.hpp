#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "growlab/model/transformer.hpp"
#include "growlab/tasks/primitives.hpp"
#include "growlab/tasks/scoring.hpp"
#include "json.hpp"

namespace growlab {

enum class InterventionKind { skip, swap, reverse };
enum class Regime { current, future };
enum class Propagation { propagated, local };

std::string to_string(InterventionKind k);
std::string to_string(Unit u);
std::string to_string(Regime r);
std::string to_string(Propagation p);
/// Throw ConfigError naming `field` on unknown names.
InterventionKind parse_intervention_kind(const std::string& s, const std::string& field = "kind");
Unit parse_unit(const std::string& s, const std::string& field = "unit");
Regime parse_regime(const std::string& s, const std::string& field = "regime");
Propagation parse_propagation(const std::string& s, const std::string& field = "propagation");

/// skip:    slots [start, start + block_len) removed (layer unit) or their sublayer zeroed.
/// swap:    windows [start, start + block_len) and [pair, pair + block_len) exchanged;
///          pair defaults to start + block_len, and pair == start is the identity.
/// reverse: order of [start, start + block_len) reversed.
/// Slot depths (LN-Scaling) stay with positions.
struct InterventionSpec {
    InterventionKind kind = InterventionKind::skip;
    Unit unit = Unit::layer;
    std::size_t start = 0;
    std::size_t block_len = 1;
    std::optional<std::size_t> pair;

    static InterventionSpec identity() { return {InterventionKind::swap, Unit::layer, 0, 1, 0}; }
};

nlohmann::json to_json(const InterventionSpec& s);
/// Strict: unknown keys raise ConfigError.
InterventionSpec intervention_from_json(const nlohmann::json& j);

/// A forward-pass view; parameters are never touched.
struct ModelView {
    ExecutionPlan plan;
    std::vector<Ablation> ablations;

    ForwardOptions options() const { return {&plan, ablations}; }
};

/// Throws ContractError for windows outside the depth or overlapping swap windows.
ModelView rewire(std::size_t depth, const InterventionSpec& spec);

/// Source of an effect: a slot and which part of its update is removed.
struct EffectSource {
    std::size_t slot = 0;
    Unit unit = Unit::layer;
};

/// Effects of one source on one prompt at one boundary. rel[k][p] is the
/// relative change of target targets[k] at measured position positions[p];
/// nullopt where the clean update norm is below 1e-12.
struct RawEffect {
    std::size_t source = 0;
    std::vector<std::size_t> targets;
    std::vector<std::size_t> positions;
    std::vector<std::vector<std::optional<double>>> rel;
    std::vector<double> output;  // per measured position, L2 between softmaxed logits
};

/// Positions whose source update is removed and positions measured, per regime.
/// Future regime with boundary t removes at positions <= t and measures > t.
struct RegimeCut {
    Regime regime = Regime::current;
    std::size_t boundary = 0;
};

/// {floor(T/4), floor(T/2), floor(3T/4)}, deduplicated, each < T - 1.
std::vector<std::size_t> future_boundaries(std::size_t T);

/// Removes the source's update and runs the rest of the network.
RawEffect propagated_effect(const LayerStack& stack, const EffectSource& source, std::span<const int> tokens,
                            const RegimeCut& cut);

/// Re-runs only target j on h_j with the clean source update removed.
RawEffect local_effect(const LayerStack& stack, const EffectSource& source, std::size_t target,
                       std::span<const int> tokens, const RegimeCut& cut);

/// Source x target maxima. Cells are nullopt when no valid entry was seen.
struct EffectMatrix {
    std::size_t depth = 0;
    std::vector<std::optional<double>> cells;  // [source * depth + target]
    std::vector<std::optional<double>> output; // per source
    nlohmann::json meta = nlohmann::json::object();

    std::optional<double> at(std::size_t s, std::size_t t) const { return cells[s * depth + t]; }
    std::size_t missing() const;  // upper-triangle cells without a value
};

/// Elementwise max of every raw entry (positions, examples, boundaries).
EffectMatrix aggregate_max(std::size_t depth, std::span<const RawEffect> raw);

struct HeatmapOptions {
    Regime regime = Regime::current;
    Propagation propagation = Propagation::propagated;
    Unit unit = Unit::layer;
};

/// All sources and targets over every prompt (and boundary), max-aggregated.
EffectMatrix effect_heatmap(const LayerStack& stack, std::span<const std::vector<int>> prompts,
                            const HeatmapOptions& options);

/// CSV source,target,value over target > source (empty value for missing cells)
/// and a JSON sidecar with the aggregation metadata.
void write_heatmap(const EffectMatrix& m, const std::filesystem::path& csv, const std::filesystem::path& json);

struct DepthScore {
    std::vector<double> d;  // per layer
    std::optional<double> score;  // nullopt when sum(d) == 0 or depth < 2
};

/// sum_l l * p_l / (L - 1) with p = d / sum(d).
DepthScore depth_score_from(std::vector<double> d);
/// d_l = mean over prompts of the max output change (future regime, all boundaries)
/// when layer l is skipped.
DepthScore depth_score(const LayerStack& stack, std::span<const std::vector<int>> prompts);

struct AttnStats {
    std::vector<double> ratio;   // mean |a_i| / |h_i|
    std::vector<double> cosine;  // mean cos(a_i, h_i)
    std::size_t excluded = 0;    // positions with |h_i| == 0
};

AttnStats attn_stats_from_traces(std::span<const ForwardTrace<float>> traces);
AttnStats attn_contribution_stats(const LayerStack& stack, std::span<const std::vector<int>> prompts);

/// n x n cosine similarity between concatenated SwiGLU weights of each block, in double.
std::vector<std::vector<double>> block_weight_similarity(const LayerStack& stack, std::size_t b);

/// score_multiple_choice over the rewired view.
ScoreReport benchmark_under_intervention(const LayerStack& stack, const InterventionSpec& spec,
                                         std::span<const PrimitiveItem> items, std::size_t k_shot,
                                         std::span<const PrimitiveItem> pool, std::uint64_t seed);

/// Header row then one row per entry; values printed with %.10g.
void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::vector<double>>& m);

}  // namespace growlab
