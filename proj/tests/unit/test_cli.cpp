#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "growlab/cli/cli.hpp"
#include "growlab/model/checkpoint.hpp"

using namespace growlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "growlab");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("growlab_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

fs::path config_path(const std::string& name) { return fs::path(GROWLAB_SOURCE_DIR) / "configs" / name; }

fs::path write_json(const fs::path& p, const nlohmann::json& j) {
    std::ofstream(p) << j.dump(2);
    return p;
}

fs::path model_checkpoint(const fs::path& dir, const LayerStack& s) {
    Container c;
    pack_stack(s, c);
    const auto p = dir / "model.ckpt";
    write_container(p, c);
    return p;
}

ModelSpec spec_of(std::size_t layers) {
    ModelSpec s;
    s.n_layers = layers;
    s.d_model = 16;
    s.d_ff = 32;
    s.n_heads = 2;
    return s;
}

}  // namespace

TEST_CASE("sha256 known vector") {
    CHECK(cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("train writes a run directory, reruns are byte-identical and append-only") {
    const auto root = scratch("train");
    const auto a = invoke({"train", "--config", config_path("tiny_lidas.json").string(), "--out", root.string()});
    REQUIRE(a.code == 0);
    const auto b = invoke({"train", "--config", config_path("tiny_lidas.json").string(), "--out", root.string()});
    REQUIRE(b.code == 0);
    const auto d0 = root / "tiny_lidas_s3_000", d1 = root / "tiny_lidas_s3_001";
    REQUIRE(fs::is_directory(d0));
    REQUIRE(fs::is_directory(d1));
    CHECK(slurp(d0 / "metrics.csv") == slurp(d1 / "metrics.csv"));
    CHECK(slurp(d0 / "checkpoints" / "final.ckpt") == slurp(d1 / "checkpoints" / "final.ckpt"));
    CHECK(fs::exists(d0 / "checkpoints" / "step_0000010_pre_growth.ckpt"));
    CHECK(fs::exists(d0 / "checkpoints" / "step_0000010_post_growth.ckpt"));
    CHECK(unpack_stack(read_container(d0 / "checkpoints" / "final.ckpt")).depth() == 4);

    CHECK(cli::verify_manifest(d0).empty());
    const auto manifest = nlohmann::json::parse(slurp(d0 / "manifest.json"));
    CHECK(manifest["run_id"] == "tiny_lidas_s3_000");
    CHECK(manifest["seed"] == 3);
    CHECK(manifest["artifacts"].size() == 7);
    std::ofstream(d0 / "metrics.csv", std::ios::app) << "tampered\n";
    CHECK(cli::verify_manifest(d0) == std::vector<std::string>{"metrics.csv"});

    const auto none = invoke({"train", "--config", config_path("tiny_none.json").string(), "--out", root.string(),
                           "--seed", "9"});
    REQUIRE(none.code == 0);
    CHECK(unpack_stack(read_container(root / "tiny_none_s9_000" / "checkpoints" / "final.ckpt")).depth() == 4);
    fs::remove_all(root);
}

TEST_CASE("train exit codes") {
    const auto root = scratch("codes");
    auto cfg = nlohmann::json::parse(slurp(config_path("tiny_none.json")));
    cfg["growth"]["strtegy"] = "NONE";
    auto r = invoke({"train", "--config", write_json(root / "typo.json", cfg).string(), "--out", root.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("growth.strtegy") != std::string::npos);

    cfg = nlohmann::json::parse(slurp(config_path("tiny_none.json")));
    cfg["schedule"]["peak_lr"] = 1e38;
    r = invoke({"train", "--config", write_json(root / "wild.json", cfg).string(), "--out", root.string()});
    CHECK(r.code == 3);
    CHECK(r.err.find("aborted") != std::string::npos);

    CHECK(invoke({"train", "--config", (root / "absent.json").string()}).code == 2);
    CHECK(invoke({"bogus"}).code == 2);
    CHECK(invoke({"--help"}).code == 0);
    fs::remove_all(root);
}

TEST_CASE("analyze outputs and idempotence") {
    const auto root = scratch("analyze");
    const auto ckpt = model_checkpoint(root, init_stack<float>(spec_of(8), 4));
    const auto out = root / "out";
    auto r = invoke({"analyze", "--checkpoint", ckpt.string(), "--analysis", "depth-score", "--out", out.string(),
                  "--n-prompts", "2", "--prompt-len", "16"});
    REQUIRE(r.code == 0);
    const auto first = slurp(out / "depth_score.csv");
    CHECK(first.rfind("metric,value\nscore,", 0) == 0);
    const double score = std::stod(first.substr(first.find("score,") + 6));
    CHECK((score >= 0.0 && score <= 1.0));
    r = invoke({"analyze", "--checkpoint", ckpt.string(), "--analysis", "depth-score", "--out", out.string(),
             "--n-prompts", "2", "--prompt-len", "16"});
    CHECK(slurp(out / "depth_score.csv") == first);

    r = invoke({"analyze", "--checkpoint", ckpt.string(), "--analysis", "heatmap", "--out", out.string(),
             "--regime", "future", "--n-prompts", "2", "--prompt-len", "16"});
    REQUIRE(r.code == 0);
    const auto csv = slurp(out / "heatmap_future_propagated_layer.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 8 * 7 / 2);
    CHECK(nlohmann::json::parse(slurp(out / "heatmap_future_propagated_layer.json"))["regime"] == "future");

    r = invoke({"analyze", "--checkpoint", ckpt.string(), "--analysis", "overlap", "--out", out.string()});
    CHECK(r.code == 4);
    CHECK(r.err.find("--analysis lens") != std::string::npos);
    r = invoke({"analyze", "--checkpoint", (root / "none.ckpt").string(), "--analysis", "stats", "--out", out.string()});
    CHECK(r.code == 4);
    r = invoke({"analyze", "--checkpoint", ckpt.string(), "--analysis", "block-sim", "--out", out.string(), "--block", "3"});
    CHECK(r.code == 2);

    r = invoke({"analyze", "--checkpoint", ckpt.string(), "--analysis", "lens", "--out", out.string(), "--lens-steps", "5",
             "--prompt-len", "16"});
    REQUIRE(r.code == 0);
    r = invoke({"analyze", "--checkpoint", (out / "lens.ckpt").string(), "--analysis", "overlap", "--out", out.string(),
             "--n-prompts", "2", "--prompt-len", "16"});
    REQUIRE(r.code == 0);
    const auto ov = slurp(out / "overlap.csv");
    CHECK(ov.find("\n7,1\n") != std::string::npos);
    fs::remove_all(root);
}

TEST_CASE("eval reports accuracy against chance") {
    const auto root = scratch("eval");
    const auto ckpt = model_checkpoint(root, zero_stack<float>(spec_of(2)));
    auto r = invoke({"eval", "--checkpoint", ckpt.string(), "--family", "var_basic", "--n", "400"});
    REQUIRE(r.code == 0);
    auto j = nlohmann::json::parse(r.out);
    CHECK(j["chance"] == 0.2);
    CHECK(std::abs(j["accuracy"].get<double>() - 0.2) <= 3 * std::sqrt(0.2 * 0.8 / 400));
    CHECK(j["skip_count"] == 0);
    CHECK(j["n"] == 400);
    CHECK(j["k_shot"] == 5);

    const auto model = model_checkpoint(root, init_stack<float>(spec_of(3), 2));
    r = invoke({"eval", "--checkpoint", model.string(), "--family", "copy_random", "--n", "20"});
    REQUIRE(r.code == 0);
    const auto clean = nlohmann::json::parse(r.out);
    CHECK(clean["chance"] == 0.1);
    r = invoke({"eval", "--checkpoint", model.string(), "--family", "copy_random", "--n", "20", "--intervention",
             R"({"kind": "swap", "start": 1, "pair": 1})", "--out", (root / "e.json").string()});
    REQUIRE(r.code == 0);
    j = nlohmann::json::parse(r.out);
    CHECK(j["accuracy"] == clean["accuracy"]);
    CHECK(j["spec"]["kind"] == "swap");
    CHECK(nlohmann::json::parse(slurp(root / "e.json")) == j);

    CHECK(invoke({"eval", "--checkpoint", model.string(), "--family", "copy"}).code == 2);
    CHECK(invoke({"eval", "--checkpoint", model.string(), "--family", "var_math", "--intervention", "{\"kind\": 3"}).code == 2);
    fs::remove_all(root);
}

TEST_CASE("grow command applies one growth step") {
    const auto root = scratch("grow");
    const auto t = invoke({"train", "--config", config_path("tiny_none.json").string(), "--out", root.string()});
    REQUIRE(t.code == 0);
    const auto src = root / "tiny_none_s3_000" / "checkpoints" / "final.ckpt";
    const auto r = invoke({"grow", "--checkpoint", src.string(), "--out", (root / "g.ckpt").string(), "--strategy",
                        "MIDAS", "--block", "2"});
    REQUIRE(r.code == 0);
    CHECK(unpack_stack(read_container(root / "g.ckpt")).depth() == 6);
    CHECK(nlohmann::json::parse(r.out)["strategy"] == "MIDAS");
    CHECK(invoke({"grow", "--checkpoint", src.string(), "--out", (root / "h.ckpt").string()}).code == 2);
    fs::remove_all(root);
}
