#include <algorithm>
#include <cstdio>
#include <fstream>

#include "growlab/cli/cli.hpp"
#include "growlab/model/checkpoint.hpp"
#include "growlab/util/errors.hpp"

namespace growlab::cli {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
}

LensConfig lens_config(const LoadedModel& m, const AnalysisOptions& o) {
    LensConfig c = o.lens;
    if (c.seed == 0) c.seed = derive_seed(m.config.seed, "lens");
    c.seq_len = std::min(c.seq_len, m.stack.spec.context_len);
    return c;
}

LensSet require_lens(const LoadedModel& m, const AnalysisOptions& o) {
    LensSet lens;
    if (o.lens_path) {
        if (!std::filesystem::exists(*o.lens_path)) {
            throw MissingPrerequisite("lens file " + o.lens_path->string() + " not found",
                                      "run `growlab analyze --analysis lens` to produce lens.ckpt");
        }
        lens = unpack_lens(read_container(*o.lens_path));
    } else {
        lens = unpack_lens(m.container);
    }
    if (lens.depth() != m.stack.depth()) {
        throw MissingPrerequisite("lens adapters cover " + std::to_string(lens.depth()) + " layers but the model has " +
                                      std::to_string(m.stack.depth()),
                                  "retrain the lens on this checkpoint with `growlab analyze --analysis lens`");
    }
    return lens;
}

std::filesystem::path write_lens(const LoadedModel& m, const LensSet& lens, const std::filesystem::path& out) {
    Container c = m.container;
    if (has_lens(c)) {
        std::erase_if(c.tensors, [](const TensorEntry& e) { return e.role == "lens"; });
        c.meta.erase("lens");
    }
    pack_lens(lens, c);
    const auto path = out / "lens.ckpt";
    write_container(path, c);
    return path;
}

std::filesystem::path write_lens_kl(const LensSet& lens, const std::filesystem::path& out) {
    std::string csv = "layer,kl_identity,kl_lens,identity\n";
    for (std::size_t i = 0; i < lens.depth(); ++i) {
        const auto& a = lens.adapters[i];
        csv += std::to_string(i) + "," + num(a.kl_identity) + "," + num(a.kl_trained) + "," +
               (a.identity ? "1" : "0") + "\n";
    }
    write_text(out / "lens_kl.csv", csv);
    return out / "lens_kl.csv";
}

std::vector<std::filesystem::path> early_exit_files(const LoadedModel& m, const LensSet& lens,
                                                    const std::filesystem::path& out, const AnalysisOptions& o,
                                                    nlohmann::json& summary) {
    std::vector<std::filesystem::path> files;
    for (auto f : kFamilies) {
        const auto seed = m.config.seed;
        const auto items = generate_items(f, o.n_items, derive_seed(seed, "eval/" + to_string(f)));
        const auto pool = exemplar_pool(f, seed);
        const auto r = early_exit_accuracy(m.stack, lens, items, o.k_shot, pool, seed);
        std::string csv = "layer,absolute,relative\n";
        for (std::size_t i = 0; i < r.absolute.size(); ++i) {
            csv += std::to_string(i) + "," + num(r.absolute[i]) + "," + (r.flagged ? "" : num(r.relative[i])) + "\n";
        }
        const auto path = out / ("early_exit_" + to_string(f) + ".csv");
        write_text(path, csv);
        files.push_back(path);
        summary[to_string(f)] = {{"final_accuracy", r.final_accuracy},
                                 {"chance", chance_level(f)},
                                 {"n_scored", r.n_scored},
                                 {"skipped", r.skipped},
                                 {"flagged_zero_final", r.flagged},
                                 {"absolute", r.absolute},
                                 {"relative", r.relative}};
    }
    write_text(out / "early_exit.json", summary.dump(2) + "\n");
    files.push_back(out / "early_exit.json");
    return files;
}

std::filesystem::path heatmap_file(const LoadedModel& m, const std::vector<std::vector<int>>& prompts,
                                   const HeatmapOptions& h, const std::filesystem::path& out) {
    const auto stem = "heatmap_" + to_string(h.regime) + "_" + to_string(h.propagation) + "_" + to_string(h.unit);
    const auto mat = effect_heatmap(m.stack, prompts, h);
    write_heatmap(mat, out / (stem + ".csv"), out / (stem + ".json"));
    return out / (stem + ".csv");
}

nlohmann::json depth_score_files(const LoadedModel& m, const std::vector<std::vector<int>>& prompts,
                                 const std::filesystem::path& out) {
    const auto ds = depth_score(m.stack, prompts);
    std::string csv = "layer,d\n";
    for (std::size_t l = 0; l < ds.d.size(); ++l) csv += std::to_string(l) + "," + num(ds.d[l]) + "\n";
    write_text(out / "depth_score_layers.csv", csv);
    write_text(out / "depth_score.csv", "metric,value\nscore," + (ds.score ? num(*ds.score) : std::string()) + "\n");
    return ds.score ? nlohmann::json(*ds.score) : nlohmann::json(nullptr);
}

void stats_file(const LoadedModel& m, const std::vector<std::vector<int>>& prompts, const std::filesystem::path& out) {
    const auto st = attn_contribution_stats(m.stack, prompts);
    std::string csv = "layer,ratio,cosine\n";
    for (std::size_t i = 0; i < st.ratio.size(); ++i) {
        csv += std::to_string(i) + "," + num(st.ratio[i]) + "," + num(st.cosine[i]) + "\n";
    }
    write_text(out / "attn_stats.csv", csv);
}

std::size_t block_of(const LoadedModel& m, const AnalysisOptions& o) {
    return o.block != 0 ? o.block : m.config.growth.block_size;
}

}  // namespace

const PreparedData& data_of(const LoadedModel& m) {
    if (!m.data) m.data = std::make_shared<const PreparedData>(prepare_data(m.config.data, m.config.seed));
    return *m.data;
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
    if (!std::filesystem::is_regular_file(checkpoint)) {
        throw MissingPrerequisite("checkpoint " + checkpoint.string() + " not found",
                                  "train a model with `growlab train` or check the --checkpoint path");
    }
    LoadedModel m;
    m.container = read_container(checkpoint);
    m.stack = unpack_stack(m.container);
    if (m.container.meta.contains("run_config")) {
        m.config = run_config_from_json(m.container.meta.at("run_config"));
    } else {
        m.config.model = m.stack.spec;
    }
    return m;
}

std::vector<std::vector<int>> analysis_prompts(const LoadedModel& m, const AnalysisOptions& o) {
    const auto& held = data_of(m).data.heldout;
    const std::size_t len = std::min(o.prompt_len != 0 ? o.prompt_len : m.config.data.seq_len, m.stack.spec.context_len);
    if (o.n_prompts == 0 || len == 0) throw ConfigError("n_prompts", "analysis needs at least one non-empty prompt");
    if (held.size() < len) throw InputError("held-out split shorter than one prompt");
    const std::size_t span = held.size() - len;
    std::vector<std::vector<int>> out;
    for (std::size_t k = 0; k < o.n_prompts; ++k) {
        const std::size_t off = o.n_prompts == 1 ? 0 : k * span / (o.n_prompts - 1);
        out.emplace_back(held.begin() + static_cast<std::ptrdiff_t>(off),
                         held.begin() + static_cast<std::ptrdiff_t>(off + len));
    }
    return out;
}

std::vector<std::filesystem::path> analyze(const LoadedModel& m, const std::string& analysis,
                                           const std::filesystem::path& out, const AnalysisOptions& o) {
    std::filesystem::create_directories(out);
    if (analysis == "lens") {
        const auto lens = train_lens(m.stack, data_of(m).lens, lens_config(m, o));
        return {write_lens(m, lens, out), write_lens_kl(lens, out)};
    }
    if (analysis == "overlap") {
        const auto lens = require_lens(m, o);
        const auto ov = top5_overlap(m.stack, lens, analysis_prompts(m, o));
        write_layer_csv(out / "overlap.csv", "overlap", ov);
        return {out / "overlap.csv"};
    }
    if (analysis == "early-exit") {
        const auto lens = require_lens(m, o);
        nlohmann::json summary;
        return early_exit_files(m, lens, out, o, summary);
    }
    if (analysis == "depth-score") {
        depth_score_files(m, analysis_prompts(m, o), out);
        return {out / "depth_score.csv", out / "depth_score_layers.csv"};
    }
    if (analysis == "heatmap") return {heatmap_file(m, analysis_prompts(m, o), o.heatmap, out)};
    if (analysis == "stats") {
        stats_file(m, analysis_prompts(m, o), out);
        return {out / "attn_stats.csv"};
    }
    if (analysis == "block-sim") {
        write_matrix_csv(out / "block_sim.csv", block_weight_similarity(m.stack, block_of(m, o)));
        return {out / "block_sim.csv"};
    }
    throw ConfigError("analysis", "unknown analysis '" + analysis +
                                      "' (expected lens, overlap, early-exit, depth-score, heatmap, stats, block-sim)");
}

nlohmann::json to_json(const EvalResult& r) {
    nlohmann::json j = {{"family", to_string(r.family)}, {"n", r.n},           {"k_shot", r.k_shot},
                        {"accuracy", r.accuracy},         {"chance", r.chance}, {"skip_count", r.skip_count}};
    if (r.spec) j["spec"] = to_json(*r.spec);
    return j;
}

EvalResult evaluate(const LoadedModel& m, Family family, std::size_t n, std::size_t k_shot, std::uint64_t seed,
                    const std::optional<InterventionSpec>& spec) {
    if (n == 0) throw ConfigError("n", "need at least one item");
    const auto items = generate_items(family, n, derive_seed(seed, "eval/" + to_string(family)));
    const auto pool = exemplar_pool(family, seed);
    const auto r = spec ? benchmark_under_intervention(m.stack, *spec, items, k_shot, pool, seed)
                        : score_multiple_choice(model_scorer(m.stack), items, k_shot, pool, seed);
    return {family, n, k_shot, r.accuracy, chance_level(family), r.skipped, spec};
}

nlohmann::json report_bundle(const LoadedModel& m, const std::filesystem::path& out, const AnalysisOptions& o) {
    std::filesystem::create_directories(out);
    nlohmann::json s;
    s["depth"] = m.stack.depth();
    s["strategy"] = to_string(m.config.growth.strategy);

    const auto lens = train_lens(m.stack, data_of(m).lens, lens_config(m, o));
    write_lens(m, lens, out);
    write_lens_kl(lens, out);
    std::vector<double> kl;
    for (const auto& a : lens.adapters) kl.push_back(a.kl_trained);
    s["lens_kl"] = kl;

    const auto prompts = analysis_prompts(m, o);
    const auto ov = top5_overlap(m.stack, lens, prompts);
    write_layer_csv(out / "overlap.csv", "overlap", ov);
    s["overlap"] = ov;

    nlohmann::json ee;
    early_exit_files(m, lens, out, o, ee);
    s["early_exit"] = ee;

    s["depth_score"] = depth_score_files(m, prompts, out);
    for (auto regime : {Regime::current, Regime::future}) {
        for (auto prop : {Propagation::propagated, Propagation::local}) {
            for (auto unit : {Unit::layer, Unit::attention, Unit::mlp}) heatmap_file(m, prompts, {regime, prop, unit}, out);
        }
    }
    stats_file(m, prompts, out);
    const std::size_t b = block_of(m, o);
    if (b != 0 && m.stack.depth() % b == 0) {
        write_matrix_csv(out / "block_sim.csv", block_weight_similarity(m.stack, b));
    }
    std::ofstream(out / "summary.json", std::ios::binary) << s.dump(2) << "\n";
    return s;
}

void write_comparison(const std::filesystem::path& out, const std::string& baseline_id, const nlohmann::json& baseline,
                      const std::string& grown_id, const nlohmann::json& grown) {
    std::filesystem::create_directories(out);
    auto late_overlap = [](const nlohmann::json& s) {
        const auto ov = s.at("overlap").get<std::vector<double>>();
        const std::size_t L = ov.size();
        const std::size_t from = (2 * L) / 3, to = L > 0 ? L - 1 : 0;  // final layer is 1 by construction
        double total = 0;
        std::size_t n = 0;
        for (std::size_t i = from; i < to; ++i, ++n) total += ov[i];
        return n ? total / static_cast<double>(n) : 0.0;
    };
    nlohmann::json rows = nlohmann::json::array();
    std::string csv = "metric,baseline,grown,expected,holds\n";
    auto add = [&](const std::string& metric, const nlohmann::json& b, const nlohmann::json& g,
                   const std::string& expected, bool holds) {
        rows.push_back({{"metric", metric}, {"baseline", b}, {"grown", g}, {"expected", expected}, {"holds", holds}});
        auto cell = [](const nlohmann::json& v) { return v.is_null() ? std::string() : num(v.get<double>()); };
        csv += metric + "," + cell(b) + "," + cell(g) + "," + expected + "," + (holds ? "yes" : "no") + "\n";
    };
    const auto& db = baseline.at("depth_score");
    const auto& dg = grown.at("depth_score");
    add("depth_score", db, dg, "grown >= baseline",
        !db.is_null() && !dg.is_null() && dg.get<double>() >= db.get<double>());
    const double lb = late_overlap(baseline), lg = late_overlap(grown);
    add("late_layer_overlap", lb, lg, "grown < baseline", lg < lb);

    std::string per_layer = "layer,baseline,grown\n";
    const auto ob = baseline.at("overlap").get<std::vector<double>>();
    const auto og = grown.at("overlap").get<std::vector<double>>();
    for (std::size_t i = 0; i < std::max(ob.size(), og.size()); ++i) {
        per_layer += std::to_string(i) + "," + (i < ob.size() ? num(ob[i]) : "") + "," + (i < og.size() ? num(og[i]) : "") + "\n";
    }
    write_text(out / "comparison.csv", csv);
    write_text(out / "comparison_overlap.csv", per_layer);
    const nlohmann::json j = {{"baseline", baseline_id},
                              {"grown", grown_id},
                              {"note", "desk-scale observation, not asserted"},
                              {"rows", rows}};
    write_text(out / "comparison.json", j.dump(2) + "\n");
}

}  // namespace growlab::cli
