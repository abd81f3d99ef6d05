#include "growlab/lens/lens.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "growlab/numerics/ops.hpp"
#include "growlab/numerics/rng.hpp"
#include "growlab/tasks/corpus.hpp"
#include "growlab/tasks/scoring.hpp"
#include "growlab/trainer/optimizer.hpp"
#include "growlab/util/errors.hpp"

namespace growlab {

namespace {

Tensor identity_matrix(std::size_t d) {
    Tensor w({d, d});
    for (std::size_t i = 0; i < d; ++i) w.at(i, i) = 1.0f;
    return w;
}

LensAdapter identity_adapter(std::size_t d) { return {identity_matrix(d), Tensor({d}), true, 0.0, 0.0}; }

Var<float> translate(Tape<float>& tape, const LensAdapter& a, Var<float> h) {
    if (a.identity) return h;
    return add_bias(matmul(h, tape.input(a.weight)), tape.input(a.bias));
}

Tensor lens_logits(const LayerStack& stack, const LensAdapter& a, const Tensor& h) {
    Tape<float> tape;
    const auto bound = bind(tape, stack, false);
    return unembed(bound, translate(tape, a, tape.input(h))).value();
}

// Mean over rows of sum_j p_j (log p_j - log q_j), p from `ref`, q from `logits`.
double mean_kl(const Tensor& ref, const Tensor& logits) {
    const std::size_t N = ref.rows(), V = ref.cols();
    double total = 0.0;
    for (std::size_t r = 0; r < N; ++r) {
        const auto lp = log_softmax_row<float>(ref.row(r));
        const auto lq = log_softmax_row<float>(logits.row(r));
        for (std::size_t c = 0; c < V; ++c) total += std::exp(lp[c]) * (lp[c] - lq[c]);
    }
    return std::max(0.0, total / static_cast<double>(N));
}

std::vector<std::size_t> eval_offsets(std::size_t n_offsets, std::size_t windows) {
    std::vector<std::size_t> out;
    const std::size_t n = std::min(windows, n_offsets);
    for (std::size_t e = 0; e < n; ++e) out.push_back(n == 1 ? 0 : e * (n_offsets - 1) / (n - 1));
    return out;
}

}  // namespace

const LensAdapter& LensSet::at(std::size_t i) const {
    if (i >= adapters.size()) {
        throw StateError("no lens adapter for layer " + std::to_string(i) + " (lens covers " +
                         std::to_string(adapters.size()) + " layers)");
    }
    return adapters[i];
}

LensSet identity_lens(const ModelSpec& spec, std::size_t depth) {
    LensSet lens;
    lens.adapters.assign(depth, identity_adapter(spec.d_model));
    lens.config.steps = 0;
    return lens;
}

LensSet train_lens(const LayerStack& stack, std::span<const int> tokens, const LensConfig& config) {
    const std::size_t L = stack.depth();
    const std::size_t d = stack.spec.d_model;
    const std::size_t seq = std::min(config.seq_len, stack.spec.context_len);
    if (L == 0) throw ContractError("lens needs at least one layer");
    if (seq == 0 || tokens.size() < seq) throw InputError("lens split shorter than one window");
    const std::size_t n_offsets = tokens.size() - seq + 1;

    LensSet lens = identity_lens(stack.spec, L);
    lens.config = config;
    lens.config.seq_len = seq;

    std::vector<LensAdapter> trained(L, identity_adapter(d));
    for (std::size_t i = 0; i + 1 < L; ++i) trained[i].identity = false;

    OptimizerState opt;
    opt.weight_decay = 0.0;
    std::vector<NamedParam> params;
    for (std::size_t i = 0; i + 1 < L; ++i) {
        params.push_back({"lens." + std::to_string(i) + ".weight", &trained[i].weight, false});
        params.push_back({"lens." + std::to_string(i) + ".bias", &trained[i].bias, false});
    }
    for (const auto& p : params) opt.moments[p.key] = {Tensor(p.tensor->shape()), Tensor(p.tensor->shape())};

    Rng rng(derive_seed(config.seed, "lens_batches"));
    for (std::size_t step = 0; step < config.steps && !params.empty(); ++step) {
        const auto off = static_cast<std::size_t>(rng.below(n_offsets));
        const auto window = tokens.subspan(off, seq);
        const auto clean = forward(stack, window, true);
        const Tensor target = softmax_rows(clean.logits);

        Tape<float> tape;
        const auto bound = bind(tape, stack, false);
        std::vector<Var<float>> losses;
        std::vector<std::pair<Var<float>, Var<float>>> leaves;
        for (std::size_t i = 0; i + 1 < L; ++i) {
            auto w = tape.parameter(trained[i].weight);
            auto b = tape.parameter(trained[i].bias);
            leaves.emplace_back(w, b);
            auto y = add_bias(matmul(tape.input(clean.trace->h[i + 1]), w), b);
            losses.push_back(soft_cross_entropy(unembed(bound, y), target));
        }
        for (std::size_t i = 0; i < losses.size(); ++i) {
            if (!std::isfinite(losses[i].value()[0])) {
                throw NumericError("lens training diverged at layer " + std::to_string(i) + ", step " +
                                   std::to_string(step));
            }
        }
        auto total = losses[0];
        for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
        tape.backward(total);

        std::vector<Tensor> grads;
        for (const auto& [w, b] : leaves) {
            grads.push_back(tape.grad(w.id));
            grads.push_back(tape.grad(b.id));
        }
        adamw_step(params, grads, opt, config.lr);
    }

    std::vector<double> kl_id(L, 0.0), kl_tr(L, 0.0);
    const auto offsets = eval_offsets(n_offsets, std::max<std::size_t>(config.eval_windows, 1));
    for (auto off : offsets) {
        const auto clean = forward(stack, tokens.subspan(off, seq), true);
        for (std::size_t i = 0; i + 1 < L; ++i) {
            kl_id[i] += mean_kl(clean.logits, lens_logits(stack, lens.adapters[i], clean.trace->h[i + 1]));
            kl_tr[i] += mean_kl(clean.logits, lens_logits(stack, trained[i], clean.trace->h[i + 1]));
        }
    }
    for (std::size_t i = 0; i + 1 < L; ++i) {
        kl_id[i] /= static_cast<double>(offsets.size());
        kl_tr[i] /= static_cast<double>(offsets.size());
        if (!std::isfinite(kl_tr[i])) throw NumericError("lens KL is not finite at layer " + std::to_string(i));
        if (kl_tr[i] < kl_id[i]) lens.adapters[i] = std::move(trained[i]);
        lens.adapters[i].kl_identity = kl_id[i];
        lens.adapters[i].kl_trained = std::min(kl_id[i], kl_tr[i]);
    }
    return lens;
}

Tensor early_exit_logits(const LayerStack& stack, const LensSet& lens, std::size_t i,
                         const ForwardTrace<float>& trace) {
    const auto& a = lens.at(i);
    if (i + 1 >= trace.h.size()) throw StateError("trace has no output for layer " + std::to_string(i));
    return lens_logits(stack, a, trace.h[i + 1]);
}

Tensor early_exit_logits(const LayerStack& stack, const LensSet& lens, std::size_t i, std::span<const int> tokens) {
    lens.at(i);
    const auto out = forward(stack, tokens, true);
    return early_exit_logits(stack, lens, i, *out.trace);
}

std::vector<double> lens_kl(const LayerStack& stack, const LensSet& lens, const ForwardTrace<float>& trace,
                            const Tensor& final_logits) {
    std::vector<double> out;
    for (std::size_t i = 0; i < trace.depth(); ++i) {
        out.push_back(mean_kl(final_logits, early_exit_logits(stack, lens, i, trace)));
    }
    return out;
}

std::vector<int> top5(std::span<const float> row) {
    std::vector<int> idx(row.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t k = std::min<std::size_t>(5, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](int a, int b) {
        const float va = row[static_cast<std::size_t>(a)], vb = row[static_cast<std::size_t>(b)];
        return va > vb || (va == vb && a < b);
    });
    idx.resize(k);
    return idx;
}

std::vector<double> top5_overlap(const LayerStack& stack, const LensSet& lens,
                                 std::span<const std::vector<int>> prompts) {
    const std::size_t L = stack.depth();
    if (prompts.empty()) throw ContractError("overlap needs at least one prompt");
    std::vector<double> total(L, 0.0);
    std::size_t positions = 0;
    for (const auto& p : prompts) {
        const auto out = forward(stack, p, true);
        const std::size_t T = out.logits.rows();
        std::vector<std::vector<int>> ref(T);
        for (std::size_t t = 0; t < T; ++t) ref[t] = top5(out.logits.row(t));
        for (std::size_t i = 0; i < L; ++i) {
            const auto logits = early_exit_logits(stack, lens, i, *out.trace);
            for (std::size_t t = 0; t < T; ++t) {
                const auto mine = top5(logits.row(t));
                std::size_t hit = 0;
                for (int id : mine) hit += static_cast<std::size_t>(std::count(ref[t].begin(), ref[t].end(), id));
                total[i] += static_cast<double>(hit) / static_cast<double>(ref[t].size());
            }
        }
        positions += T;
    }
    for (auto& v : total) v /= static_cast<double>(positions);
    return total;
}

EarlyExitAccuracy early_exit_accuracy(const LayerStack& stack, const LensSet& lens,
                                      std::span<const PrimitiveItem> items, std::size_t k_shot,
                                      std::span<const PrimitiveItem> pool, std::uint64_t seed) {
    if (items.empty()) throw ContractError("no items to score");
    const std::size_t L = stack.depth();
    for (std::size_t i = 0; i < L; ++i) lens.at(i);
    const auto prompts = build_prompts(items, pool, k_shot, seed);

    EarlyExitAccuracy r;
    std::vector<std::size_t> correct(L, 0);
    std::size_t final_correct = 0;
    for (std::size_t n = 0; n < items.size(); ++n) {
        const auto& item = items[n];
        const auto prefix = tokenize(prompts[n]);
        std::size_t longest = 0;
        for (const auto& c : item.choices) longest = std::max(longest, c.size() + 1);
        if (prefix.size() + longest > stack.spec.context_len) {
            ++r.skipped;
            continue;
        }
        std::vector<int> best(L + 1, -1);
        std::vector<double> best_score(L + 1, 0.0);
        for (std::size_t c = 0; c < item.choices.size(); ++c) {
            auto tokens = prefix;
            const auto cont = tokenize(" " + item.choices[c]);
            tokens.insert(tokens.end(), cont.begin(), cont.end());
            const auto out = forward(stack, tokens, true);
            for (std::size_t i = 0; i <= L; ++i) {
                const double s = continuation_logprob(
                    i < L ? early_exit_logits(stack, lens, i, *out.trace) : out.logits, tokens, prefix.size());
                if (best[i] < 0 || s > best_score[i]) {
                    best[i] = static_cast<int>(c);
                    best_score[i] = s;
                }
            }
        }
        ++r.n_scored;
        for (std::size_t i = 0; i < L; ++i) correct[i] += static_cast<std::size_t>(best[i]) == item.answer_index;
        final_correct += static_cast<std::size_t>(best[L]) == item.answer_index;
    }
    const double n = static_cast<double>(std::max<std::size_t>(r.n_scored, 1));
    for (auto c : correct) r.absolute.push_back(static_cast<double>(c) / n);
    r.final_accuracy = static_cast<double>(final_correct) / n;
    r.flagged = final_correct == 0;
    if (!r.flagged) {
        for (auto c : correct) r.relative.push_back(static_cast<double>(c) / static_cast<double>(final_correct));
    }
    return r;
}

void pack_lens(const LensSet& lens, Container& into) {
    nlohmann::json meta = {{"steps", lens.config.steps},
                           {"lr", lens.config.lr},
                           {"seq_len", lens.config.seq_len},
                           {"eval_windows", lens.config.eval_windows},
                           {"seed", lens.config.seed},
                           {"split", lens.split},
                           {"depth", lens.depth()}};
    auto& identity = meta["identity"] = nlohmann::json::array();
    auto& kl_id = meta["kl_identity"] = nlohmann::json::array();
    auto& kl_tr = meta["kl_trained"] = nlohmann::json::array();
    for (std::size_t i = 0; i < lens.depth(); ++i) {
        const auto& a = lens.adapters[i];
        identity.push_back(a.identity);
        kl_id.push_back(a.kl_identity);
        kl_tr.push_back(a.kl_trained);
        into.add("lens." + std::to_string(i) + ".weight", "lens", a.weight);
        into.add("lens." + std::to_string(i) + ".bias", "lens", a.bias);
    }
    into.meta["lens"] = std::move(meta);
}

bool has_lens(const Container& c) { return c.meta.contains("lens"); }

LensSet unpack_lens(const Container& c) {
    if (!has_lens(c)) {
        throw MissingPrerequisite("checkpoint holds no lens adapters",
                                  "run `growlab analyze --analysis lens` on this checkpoint first");
    }
    try {
        const auto& m = c.meta.at("lens");
        LensSet lens;
        lens.config.steps = m.at("steps").get<std::size_t>();
        lens.config.lr = m.at("lr").get<double>();
        lens.config.seq_len = m.at("seq_len").get<std::size_t>();
        lens.config.eval_windows = m.at("eval_windows").get<std::size_t>();
        lens.config.seed = m.at("seed").get<std::uint64_t>();
        lens.split = m.at("split").get<std::string>();
        const auto depth = m.at("depth").get<std::size_t>();
        for (std::size_t i = 0; i < depth; ++i) {
            LensAdapter a;
            a.weight = c.get("lens." + std::to_string(i) + ".weight");
            a.bias = c.get("lens." + std::to_string(i) + ".bias");
            a.identity = m.at("identity").at(i).get<bool>();
            a.kl_identity = m.at("kl_identity").at(i).get<double>();
            a.kl_trained = m.at("kl_trained").at(i).get<double>();
            lens.adapters.push_back(std::move(a));
        }
        return lens;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed lens metadata: ") + e.what());
    }
}

void write_layer_csv(const std::filesystem::path& path, const std::string& name, std::span<const double> values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << "layer," << name << "\n";
    char buf[64];
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g\n", i, values[i]);
        out << buf;
    }
}

}  // namespace growlab
