#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "growlab/cli/cli.hpp"
#include "growlab/growth/growth.hpp"
#include "growlab/trainer/trainer.hpp"
#include "growlab/util/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace growlab::cli {

namespace {

void apply_thread_cap() {
#ifdef _OPENMP
    if (const char* v = std::getenv("GROWLAB_THREADS")) {
        const int n = std::atoi(v);
        if (n > 0) omp_set_num_threads(std::min(n, omp_get_max_threads()));
    }
#endif
}

std::optional<InterventionSpec> parse_intervention(const std::string& text) {
    if (text.empty()) return std::nullopt;
    std::string body = text;
    if (text.front() == '@') {
        std::ifstream in(text.substr(1));
        if (!in) throw ConfigError("intervention", "cannot read " + text.substr(1));
        std::stringstream ss;
        ss << in.rdbuf();
        body = ss.str();
    }
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw ConfigError("intervention", "not valid JSON");
    return intervention_from_json(j);
}

struct AnalysisFlags {
    AnalysisOptions o;
    std::string lens_path;
    std::string regime = "current", propagation = "propagated", unit = "layer";

    void add_to(CLI::App* app, bool heatmap_flags) {
        app->add_option("--n-prompts", o.n_prompts, "held-out windows used as prompts");
        app->add_option("--prompt-len", o.prompt_len, "prompt length in tokens (default: the run's seq_len)");
        app->add_option("--n-items", o.n_items, "items per family for early-exit accuracy");
        app->add_option("--k-shot", o.k_shot, "exemplars per prompt");
        app->add_option("--lens-steps", o.lens.steps, "lens training steps");
        app->add_option("--lens-lr", o.lens.lr, "lens learning rate");
        app->add_option("--block", o.block, "block size for block-sim (default: the run's)");
        if (heatmap_flags) {
            app->add_option("--lens", lens_path, "checkpoint holding lens adapters (default: --checkpoint)");
            app->add_option("--regime", regime, "current | future");
            app->add_option("--propagation", propagation, "propagated | local");
            app->add_option("--unit", unit, "layer | attention_sublayer | mlp_sublayer");
        }
    }

    AnalysisOptions resolve() {
        o.heatmap = {parse_regime(regime, "regime"), parse_propagation(propagation, "propagation"),
                     parse_unit(unit, "unit")};
        if (!lens_path.empty()) o.lens_path = lens_path;
        return o;
    }
};

int cmd_train(const std::string& config_path, const std::string& out_root, std::optional<std::uint64_t> seed,
              std::uint64_t progress, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    const auto data = prepare_data(cfg.data, cfg.seed);
    const auto stem = std::filesystem::path(config_path).stem().string();
    const auto dir = next_run_dir(out_root, stem, cfg.seed);
    std::ofstream(dir / "config.json", std::ios::binary) << to_json(cfg).dump(2) << "\n";

    RunOptions opts;
    opts.out_dir = dir;
    if (progress > 0) {
        opts.on_step = [&err, progress](const MetricRow& r) {
            if (r.step % progress == 0) {
                err << "step " << r.step << " depth " << r.depth << " loss " << r.loss << " lr " << r.lr << "\n";
            }
        };
    }
    auto finish = [&] { write_manifest(dir, build_manifest(dir, dir.filename().string(), "config.json", cfg.seed)); };
    try {
        const auto res = run(cfg, data.data, opts);
        finish();
        out << nlohmann::json{{"run_dir", dir.string()},
                              {"initial_eval_loss", res.initial_eval_loss},
                              {"final_eval_loss", res.final_eval_loss},
                              {"final_depth", res.stack.depth()}}
                   .dump()
            << "\n";
    } catch (const TrainingAborted&) {
        finish();
        throw;
    }
    return kOk;
}

int cmd_grow(const std::string& checkpoint, const std::string& out_path, const std::string& strategy,
             std::size_t block, std::ostream& out) {
    const auto m = load_model(checkpoint);
    const Strategy s = strategy.empty() ? m.config.growth.strategy : parse_strategy(strategy);
    if (s == Strategy::none) throw ConfigError("strategy", "NONE does not grow");
    const std::size_t b = block != 0 ? block : m.config.growth.block_size;
    const auto opt = unpack_optimizer(m.container);
    const auto g = grow(m.stack, opt, b, s);
    const auto step = m.container.meta.value("step", std::uint64_t{0});
    const auto stage = m.container.meta.value("stage", std::size_t{0});
    write_container(out_path, make_checkpoint(g.stack, g.opt, m.config, step, stage + 1, "post_growth"));
    out << to_json(g.event).dump() << "\n";
    return kOk;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_root, AnalysisOptions o,
               std::ostream& out) {
    const std::filesystem::path root(out_root);
    std::filesystem::create_directories(root);
    std::vector<std::pair<std::string, nlohmann::json>> summaries;
    for (const auto& r : runs) {
        const std::filesystem::path dir(r);
        const auto ckpt = dir / "checkpoints" / "final.ckpt";
        const auto m = load_model(ckpt);
        const auto id = dir.filename().string();
        summaries.emplace_back(id, report_bundle(m, root / id, o));
    }
    if (summaries.size() == 2) {
        auto is_grown = [](const nlohmann::json& s) { return s.at("strategy") != "NONE"; };
        auto a = summaries[0], b = summaries[1];
        if (is_grown(a.second) && !is_grown(b.second)) std::swap(a, b);
        write_comparison(root, a.first, a.second, b.first, b.second);
    }
    write_manifest(root, build_manifest(root, root.filename().string(), "", 0));
    out << nlohmann::json{{"report_dir", root.string()}, {"runs", runs.size()}}.dump() << "\n";
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"growlab: depth-growth training and analysis lab", "growlab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    auto* train = app.add_subcommand("train", "train a model from a JSON config");
    std::string config, out_root = "runs";
    std::optional<std::uint64_t> seed;
    std::uint64_t progress = 0;
    train->add_option("--config", config, "run config JSON")->required();
    train->add_option("--out", out_root, "parent directory for run directories");
    train->add_option("--seed", seed, "override the config seed");
    train->add_option("--progress", progress, "print every N steps to stderr (0: silent)");

    auto* growc = app.add_subcommand("grow", "apply one growth step to a checkpoint");
    std::string checkpoint, out_path, strategy;
    std::size_t block = 0;
    growc->add_option("--checkpoint", checkpoint)->required();
    growc->add_option("--out", out_path, "grown checkpoint path")->required();
    growc->add_option("--strategy", strategy, "MIDAS | LIDAS (default: the run's)");
    growc->add_option("--block", block, "block size (default: the run's)");

    auto* analyzec = app.add_subcommand("analyze", "run one analysis on a checkpoint");
    std::string analysis, out_dir;
    AnalysisFlags aflags;
    analyzec->add_option("--checkpoint", checkpoint)->required();
    analyzec->add_option("--analysis", analysis, "lens | overlap | early-exit | depth-score | heatmap | stats | block-sim")
        ->required();
    analyzec->add_option("--out", out_dir, "output directory")->required();
    aflags.add_to(analyzec, true);

    auto* evalc = app.add_subcommand("eval", "multiple-choice accuracy on a reasoning primitive");
    std::string family, intervention, eval_out;
    std::size_t n_items = 200, k_shot = 5;
    std::optional<std::uint64_t> eval_seed;
    evalc->add_option("--checkpoint", checkpoint)->required();
    evalc->add_option("--family", family, "copy_random | copy_real | var_basic | var_code | var_math")->required();
    evalc->add_option("--n", n_items, "number of items");
    evalc->add_option("--k-shot", k_shot, "exemplars per prompt");
    evalc->add_option("--seed", eval_seed, "item seed (default: the run's)");
    evalc->add_option("--intervention", intervention, "InterventionSpec JSON, or @file");
    evalc->add_option("--out", eval_out, "also write the JSON here");

    auto* reportc = app.add_subcommand("report", "full analysis bundle for one or two run directories");
    std::vector<std::string> runs;
    AnalysisFlags rflags;
    reportc->add_option("--run", runs, "run directory (repeat for a comparison)")->required();
    reportc->add_option("--out", out_dir, "report directory")->required();
    rflags.add_to(reportc, false);

    try {
        std::vector<std::string> args;
        for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfig;
    }

    apply_thread_cap();
    try {
        if (*train) return cmd_train(config, out_root, seed, progress, out, err);
        if (*growc) return cmd_grow(checkpoint, out_path, strategy, block, out);
        if (*analyzec) {
            const auto m = load_model(checkpoint);
            for (const auto& f : analyze(m, analysis, out_dir, aflags.resolve())) out << f.string() << "\n";
            return kOk;
        }
        if (*evalc) {
            const auto fam = parse_family(family);
            const auto spec = parse_intervention(intervention);
            const auto m = load_model(checkpoint);
            const auto r = evaluate(m, fam, n_items, k_shot, eval_seed.value_or(m.config.seed), spec);
            const auto text = to_json(r).dump();
            out << text << "\n";
            if (!eval_out.empty()) std::ofstream(eval_out, std::ios::binary) << text << "\n";
            return kOk;
        }
        if (*reportc) return cmd_report(runs, out_dir, rflags.resolve(), out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const TrainingAborted& e) {
        err << "training aborted at step " << e.step() << ": " << e.what() << "\n";
        if (!e.last_checkpoint().empty()) err << "last checkpoint: " << e.last_checkpoint().string() << "\n";
        return kNumeric;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kNumeric;
    } catch (const MissingPrerequisite& e) {
        err << "missing prerequisite: " << e.what() << "\n  hint: " << e.hint() << "\n";
        return kMissing;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << "\n";
        return kMissing;
    } catch (const ContractError& e) {
        err << "invalid request: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}

}  // namespace growlab::cli
