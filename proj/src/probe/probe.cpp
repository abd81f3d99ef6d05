#include "growlab/probe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "growlab/numerics/ops.hpp"
#include "growlab/util/errors.hpp"
#include "growlab/util/json_fields.hpp"

namespace growlab {

namespace {

constexpr double kNormFloor = 1e-12;

template <typename E>
E parse_enum(const std::string& s, const std::string& field, std::initializer_list<std::pair<const char*, E>> table) {
    for (const auto& [name, value] : table) {
        if (s == name) return value;
    }
    std::string names;
    for (const auto& [name, value] : table) names += std::string(names.empty() ? "" : ", ") + name;
    throw ConfigError(field, "unknown value '" + s + "' (expected one of " + names + ")");
}

// The part of slot j's residual update that `unit` names.
std::vector<float> update_row(const ForwardTrace<float>& tr, std::size_t j, Unit unit, std::size_t r) {
    const std::size_t d = tr.a[j].cols();
    std::vector<float> out(d);
    for (std::size_t c = 0; c < d; ++c) {
        const float a = tr.a[j].at(r, c), m = tr.m[j].at(r, c);
        out[c] = unit == Unit::layer ? a + m : unit == Unit::attention ? a : m;
    }
    return out;
}

double l2(std::span<const float> x) {
    double s = 0.0;
    for (float v : x) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

double l2_diff(std::span<const float> x, std::span<const float> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - y[i];
        s += d * d;
    }
    return std::sqrt(s);
}

std::optional<double> relative_change(std::span<const float> clean, std::span<const float> changed) {
    const double n = l2(clean);
    if (!(n >= kNormFloor)) return std::nullopt;
    const double v = l2_diff(changed, clean) / n;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
}

struct Cut {
    std::vector<char> removed;            // per row
    std::vector<std::size_t> measured;    // rows
    std::optional<std::size_t> upto;
};

Cut make_cut(const RegimeCut& cut, std::size_t T) {
    Cut c;
    if (cut.regime == Regime::future) {
        if (cut.boundary + 1 >= T) throw ContractError("boundary leaves no position to measure");
        c.upto = cut.boundary;
    }
    c.removed.assign(T, 0);
    for (std::size_t r = 0; r < T; ++r) {
        const bool removed = !c.upto || r <= *c.upto;
        c.removed[r] = removed;
        if (!c.upto || r > *c.upto) c.measured.push_back(r);
    }
    return c;
}

void check_source(std::size_t depth, const EffectSource& s) {
    if (s.slot >= depth) throw ContractError("source slot " + std::to_string(s.slot) + " outside depth");
}

RawEffect propagated_from(const LayerStack& stack, const ForwardOutput<float>& clean, const EffectSource& source,
                          std::span<const int> tokens, const RegimeCut& regime, bool with_targets) {
    const std::size_t L = stack.depth(), T = tokens.size();
    check_source(L, source);
    const Cut cut = make_cut(regime, T);
    const std::vector<Ablation> abl = {{source.slot, source.unit, cut.upto}};
    ForwardOptions opts;
    opts.ablations = abl;
    const auto hit = forward(stack, tokens, true, opts);

    RawEffect e;
    e.source = source.slot;
    e.positions = cut.measured;
    if (with_targets) {
        for (std::size_t j = source.slot + 1; j < L; ++j) {
            e.targets.push_back(j);
            auto& row = e.rel.emplace_back();
            for (auto r : cut.measured) {
                row.push_back(relative_change(update_row(*clean.trace, j, source.unit, r),
                                              update_row(*hit.trace, j, source.unit, r)));
            }
        }
    }
    const auto p = softmax_rows(clean.logits);
    const auto q = softmax_rows(hit.logits);
    for (auto r : cut.measured) e.output.push_back(l2_diff(p.row(r), q.row(r)));
    return e;
}

RawEffect local_from(const LayerStack& stack, const ForwardTrace<float>& clean, const EffectSource& source,
                     std::size_t target, std::size_t T, const RegimeCut& regime) {
    const std::size_t L = stack.depth();
    check_source(L, source);
    if (target <= source.slot || target >= L) throw ContractError("local effect needs source < target < depth");
    const Cut cut = make_cut(regime, T);
    const std::size_t s = source.slot;

    // h_j with the source update taken out, re-summed in forward order from h_s
    // so that target s + 1 sees exactly what the ablated forward pass sees.
    Tensor x = clean.h[target];
    const std::size_t d = x.cols();
    for (std::size_t r = 0; r < T; ++r) {
        if (!cut.removed[r]) continue;
        for (std::size_t c = 0; c < d; ++c) {
            float v = clean.h[s].at(r, c);
            if (source.unit == Unit::mlp) v += clean.a[s].at(r, c);
            if (source.unit == Unit::attention) v += clean.m[s].at(r, c);
            for (std::size_t k = s + 1; k < target; ++k) {
                v += clean.a[k].at(r, c);
                v += clean.m[k].at(r, c);
            }
            x.at(r, c) = v;
        }
    }
    Tape<float> tape;
    const auto bound = bind(tape, stack, false);
    const auto out = layer_forward(bound, target, target + 1, tape.input(x), T);

    RawEffect e;
    e.source = s;
    e.targets = {target};
    e.positions = cut.measured;
    auto& row = e.rel.emplace_back();
    for (auto r : cut.measured) {
        std::vector<float> changed(d);
        for (std::size_t c = 0; c < d; ++c) {
            const float a = out.a.value().at(r, c), m = out.m.value().at(r, c);
            changed[c] = source.unit == Unit::layer ? a + m : source.unit == Unit::attention ? a : m;
        }
        row.push_back(relative_change(update_row(clean, target, source.unit, r), changed));
    }
    return e;
}

std::vector<RegimeCut> cuts_for(Regime regime, std::size_t T) {
    if (regime == Regime::current) return {RegimeCut{}};
    std::vector<RegimeCut> out;
    for (auto t : future_boundaries(T)) out.push_back({Regime::future, t});
    if (out.empty()) throw InputError("prompt of length " + std::to_string(T) + " is too short for the future regime");
    return out;
}

void write_value(std::ostream& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    out << buf;
}

}  // namespace

std::string to_string(InterventionKind k) {
    switch (k) {
        case InterventionKind::skip: return "skip";
        case InterventionKind::swap: return "swap";
        case InterventionKind::reverse: return "reverse";
    }
    return "?";
}

std::string to_string(Unit u) {
    switch (u) {
        case Unit::layer: return "layer";
        case Unit::attention: return "attention_sublayer";
        case Unit::mlp: return "mlp_sublayer";
    }
    return "?";
}

std::string to_string(Regime r) { return r == Regime::current ? "current" : "future"; }
std::string to_string(Propagation p) { return p == Propagation::propagated ? "propagated" : "local"; }

InterventionKind parse_intervention_kind(const std::string& s, const std::string& field) {
    return parse_enum<InterventionKind>(
        s, field, {{"skip", InterventionKind::skip}, {"swap", InterventionKind::swap}, {"reverse", InterventionKind::reverse}});
}

Unit parse_unit(const std::string& s, const std::string& field) {
    return parse_enum<Unit>(s, field,
                            {{"layer", Unit::layer}, {"attention_sublayer", Unit::attention}, {"mlp_sublayer", Unit::mlp}});
}

Regime parse_regime(const std::string& s, const std::string& field) {
    return parse_enum<Regime>(s, field, {{"current", Regime::current}, {"future", Regime::future}});
}

Propagation parse_propagation(const std::string& s, const std::string& field) {
    return parse_enum<Propagation>(s, field, {{"propagated", Propagation::propagated}, {"local", Propagation::local}});
}

nlohmann::json to_json(const InterventionSpec& s) {
    nlohmann::json j = {{"kind", to_string(s.kind)},
                        {"unit", to_string(s.unit)},
                        {"start", s.start},
                        {"block_len", s.block_len}};
    if (s.pair) j["pair"] = *s.pair;
    return j;
}

InterventionSpec intervention_from_json(const nlohmann::json& j) {
    JsonFields f(j, "intervention");
    InterventionSpec s;
    std::string kind = "skip", unit = "layer";
    f.get("kind", kind);
    f.get("unit", unit);
    s.kind = parse_intervention_kind(kind, f.path_of("kind"));
    s.unit = parse_unit(unit, f.path_of("unit"));
    if (s.kind == InterventionKind::reverse) s.block_len = 4;
    f.get("start", s.start);
    f.get("block_len", s.block_len);
    if (f.has("pair")) {
        std::size_t p = 0;
        f.get("pair", p);
        s.pair = p;
    }
    f.finish();
    return s;
}

ModelView rewire(std::size_t depth, const InterventionSpec& spec) {
    const std::size_t n = spec.block_len;
    if (n == 0) throw ContractError("block_len must be positive");
    if (spec.start + n > depth) throw ContractError("intervention window outside the depth");
    ModelView view{ExecutionPlan::identity(depth), {}};
    auto& slots = view.plan.slots;
    switch (spec.kind) {
        case InterventionKind::skip:
            if (spec.unit == Unit::layer) {
                slots.erase(slots.begin() + static_cast<std::ptrdiff_t>(spec.start),
                            slots.begin() + static_cast<std::ptrdiff_t>(spec.start + n));
            } else {
                for (std::size_t i = spec.start; i < spec.start + n; ++i) view.ablations.push_back({i, spec.unit, {}});
            }
            break;
        case InterventionKind::swap: {
            if (spec.unit != Unit::layer) throw ContractError("swap moves whole layers");
            const std::size_t pair = spec.pair.value_or(spec.start + n);
            if (pair + n > depth) throw ContractError("swap window outside the depth");
            if (pair == spec.start) break;
            const std::size_t lo = std::min(pair, spec.start), hi = std::max(pair, spec.start);
            if (hi < lo + n) throw ContractError("swap windows overlap");
            for (std::size_t i = 0; i < n; ++i) std::swap(slots[spec.start + i].layer, slots[pair + i].layer);
            break;
        }
        case InterventionKind::reverse:
            if (spec.unit != Unit::layer) throw ContractError("reverse moves whole layers");
            for (std::size_t i = 0; i < n / 2; ++i) {
                std::swap(slots[spec.start + i].layer, slots[spec.start + n - 1 - i].layer);
            }
            break;
    }
    return view;
}

std::vector<std::size_t> future_boundaries(std::size_t T) {
    std::vector<std::size_t> out;
    for (std::size_t t : {T / 4, T / 2, 3 * T / 4}) {
        if (t + 1 < T && (out.empty() || out.back() != t)) out.push_back(t);
    }
    return out;
}

RawEffect propagated_effect(const LayerStack& stack, const EffectSource& source, std::span<const int> tokens,
                            const RegimeCut& cut) {
    const auto clean = forward(stack, tokens, true);
    return propagated_from(stack, clean, source, tokens, cut, true);
}

RawEffect local_effect(const LayerStack& stack, const EffectSource& source, std::size_t target,
                       std::span<const int> tokens, const RegimeCut& cut) {
    const auto clean = forward(stack, tokens, true);
    return local_from(stack, *clean.trace, source, target, tokens.size(), cut);
}

std::size_t EffectMatrix::missing() const {
    std::size_t n = 0;
    for (std::size_t s = 0; s < depth; ++s) {
        for (std::size_t t = s + 1; t < depth; ++t) n += !cells[s * depth + t].has_value();
    }
    return n;
}

EffectMatrix aggregate_max(std::size_t depth, std::span<const RawEffect> raw) {
    EffectMatrix m;
    m.depth = depth;
    m.cells.assign(depth * depth, std::nullopt);
    m.output.assign(depth, std::nullopt);
    auto bump = [](std::optional<double>& cell, double v) {
        if (!cell || v > *cell) cell = v;
    };
    for (const auto& e : raw) {
        if (e.source >= depth) throw ContractError("effect source outside the depth");
        for (std::size_t k = 0; k < e.targets.size(); ++k) {
            if (e.targets[k] >= depth) throw ContractError("effect target outside the depth");
            for (const auto& v : e.rel[k]) {
                if (v) bump(m.cells[e.source * depth + e.targets[k]], *v);
            }
        }
        for (double v : e.output) {
            if (std::isfinite(v)) bump(m.output[e.source], v);
        }
    }
    m.meta = {{"aggregation", "max over examples, positions and boundaries"}, {"depth", depth}};
    return m;
}

EffectMatrix effect_heatmap(const LayerStack& stack, std::span<const std::vector<int>> prompts,
                            const HeatmapOptions& options) {
    if (prompts.empty()) throw ContractError("heatmap needs at least one prompt");
    const std::size_t L = stack.depth();
    std::vector<RawEffect> raw;
    for (const auto& p : prompts) {
        const auto clean = forward(stack, p, true);
        for (const auto& cut : cuts_for(options.regime, p.size())) {
            for (std::size_t s = 0; s < L; ++s) {
                const EffectSource src{s, options.unit};
                if (options.propagation == Propagation::propagated) {
                    raw.push_back(propagated_from(stack, clean, src, p, cut, true));
                } else {
                    for (std::size_t j = s + 1; j < L; ++j) raw.push_back(local_from(stack, *clean.trace, src, j, p.size(), cut));
                }
            }
        }
    }
    auto m = aggregate_max(L, raw);
    m.meta["regime"] = to_string(options.regime);
    m.meta["propagation"] = to_string(options.propagation);
    m.meta["unit"] = to_string(options.unit);
    m.meta["n_prompts"] = prompts.size();
    m.meta["boundaries"] = options.regime == Regime::future ? "floor(T/4), floor(T/2), floor(3T/4)" : "none";
    m.meta["missing"] = m.missing();
    return m;
}

void write_heatmap(const EffectMatrix& m, const std::filesystem::path& csv, const std::filesystem::path& json) {
    std::ofstream out(csv, std::ios::binary);
    if (!out) throw InputError("cannot write " + csv.string());
    out << "source,target,value\n";
    for (std::size_t s = 0; s < m.depth; ++s) {
        for (std::size_t t = s + 1; t < m.depth; ++t) {
            out << s << "," << t << ",";
            if (const auto v = m.at(s, t)) write_value(out, *v);
            out << "\n";
        }
    }
    auto meta = m.meta;
    auto& outs = meta["output_change"] = nlohmann::json::array();
    for (const auto& v : m.output) outs.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    std::ofstream js(json, std::ios::binary);
    if (!js) throw InputError("cannot write " + json.string());
    js << meta.dump(2) << "\n";
}

DepthScore depth_score_from(std::vector<double> d) {
    DepthScore r;
    double total = 0.0, weighted = 0.0;
    for (std::size_t l = 0; l < d.size(); ++l) {
        if (!(d[l] >= 0.0) || !std::isfinite(d[l])) throw ContractError("depth-score mass must be finite and >= 0");
        total += d[l];
        weighted += static_cast<double>(l) * d[l];
    }
    r.d = std::move(d);
    if (r.d.size() >= 2 && total > 0.0) {
        r.score = std::clamp(weighted / (total * static_cast<double>(r.d.size() - 1)), 0.0, 1.0);
    }
    return r;
}

DepthScore depth_score(const LayerStack& stack, std::span<const std::vector<int>> prompts) {
    if (prompts.empty()) throw ContractError("depth score needs at least one prompt");
    const std::size_t L = stack.depth();
    std::vector<double> d(L, 0.0);
    for (const auto& p : prompts) {
        const auto clean = forward(stack, p, true);
        const auto cuts = cuts_for(Regime::future, p.size());
        for (std::size_t l = 0; l < L; ++l) {
            double best = 0.0;
            for (const auto& cut : cuts) {
                const auto e = propagated_from(stack, clean, {l, Unit::layer}, p, cut, false);
                for (double v : e.output) best = std::max(best, v);
            }
            d[l] += best;
        }
    }
    for (auto& v : d) v /= static_cast<double>(prompts.size());
    return depth_score_from(std::move(d));
}

AttnStats attn_stats_from_traces(std::span<const ForwardTrace<float>> traces) {
    AttnStats s;
    if (traces.empty()) throw ContractError("no traces");
    const std::size_t L = traces.front().depth();
    s.ratio.assign(L, 0.0);
    s.cosine.assign(L, 0.0);
    std::vector<std::size_t> counts(L, 0);
    for (const auto& tr : traces) {
        if (tr.depth() != L) throw ContractError("traces of different depth");
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t r = 0; r < tr.a[i].rows(); ++r) {
                const auto a = tr.a[i].row(r), h = tr.h[i].row(r);
                double dot = 0.0, na = 0.0, nh = 0.0;
                for (std::size_t c = 0; c < a.size(); ++c) {
                    dot += static_cast<double>(a[c]) * h[c];
                    na += static_cast<double>(a[c]) * a[c];
                    nh += static_cast<double>(h[c]) * h[c];
                }
                if (nh == 0.0) {
                    ++s.excluded;
                    continue;
                }
                s.ratio[i] += std::sqrt(na) / std::sqrt(nh);
                s.cosine[i] += na == 0.0 ? 0.0 : dot / std::sqrt(na * nh);
                ++counts[i];
            }
        }
    }
    for (std::size_t i = 0; i < L; ++i) {
        if (counts[i] == 0) continue;
        s.ratio[i] /= static_cast<double>(counts[i]);
        s.cosine[i] /= static_cast<double>(counts[i]);
    }
    return s;
}

AttnStats attn_contribution_stats(const LayerStack& stack, std::span<const std::vector<int>> prompts) {
    std::vector<ForwardTrace<float>> traces;
    for (const auto& p : prompts) traces.push_back(*forward(stack, p, true).trace);
    return attn_stats_from_traces(traces);
}

std::vector<std::vector<double>> block_weight_similarity(const LayerStack& stack, std::size_t b) {
    const std::size_t L = stack.depth();
    if (b == 0 || L % b != 0) throw ContractError("depth " + std::to_string(L) + " is not divisible by " + std::to_string(b));
    const std::size_t n = L / b;
    std::vector<std::vector<double>> blocks(n);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = k * b; l < (k + 1) * b; ++l) {
            for (auto role : kMlpRoles) {
                for (float v : stack.layers[l].tensor(role).data()) blocks[k].push_back(v);
            }
        }
    }
    std::vector<double> norm2(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        for (double v : blocks[k]) norm2[k] += v * v;
    }
    std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        sim[i][i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < blocks[i].size(); ++c) dot += blocks[i][c] * blocks[j][c];
            const double den = std::sqrt(norm2[i] * norm2[j]);
            sim[i][j] = sim[j][i] = den > 0.0 ? dot / den : 0.0;
        }
    }
    return sim;
}

ScoreReport benchmark_under_intervention(const LayerStack& stack, const InterventionSpec& spec,
                                         std::span<const PrimitiveItem> items, std::size_t k_shot,
                                         std::span<const PrimitiveItem> pool, std::uint64_t seed) {
    const ModelView view = rewire(stack.depth(), spec);
    const Scorer scorer{stack.spec.context_len, [&stack, &view](std::span<const int> toks) {
                            return forward(stack, toks, false, view.options()).logits;
                        }};
    return score_multiple_choice(scorer, items, k_shot, pool, seed);
}

void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::vector<double>>& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << "row,col,value\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = 0; j < m[i].size(); ++j) {
            out << i << "," << j << ",";
            write_value(out, m[i][j]);
            out << "\n";
        }
    }
}

}  // namespace growlab
