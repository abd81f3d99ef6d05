#include "growlab/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "growlab/numerics/kernels.hpp"
#include "growlab/util/errors.hpp"

namespace growlab {

namespace {

template <typename T>
void require_rank2(const BasicTensor<T>& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a 2-D operand, got " + shape_string(t.shape()));
    }
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

template <typename T>
void require_same_tape(Var<T> a, Var<T> b) {
    if (a.tape != b.tape) throw ContractError("operands recorded on different tapes");
}

template <typename T>
void accumulate(BasicTensor<T>& into, const BasicTensor<T>& g) {
    T* dst = into.ptr();
    const T* src = g.ptr();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

constexpr double kNormEps = 1e-5;

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    require_same_tape(a, b);
    const auto& A = a.value();
    const auto& B = b.value();
    require_rank2(A, "matmul");
    require_rank2(B, "matmul");
    const std::size_t M = A.dim(0), K = A.dim(1), N = B.dim(1);
    if (B.dim(0) != K) {
        throw DimensionError("matmul: inner dimensions differ " + shape_string(A.shape()) + " x " +
                             shape_string(B.shape()));
    }
    BasicTensor<T> C({M, N});
    kernels::gemm(M, N, K, A.ptr(), B.ptr(), C.ptr());
    return a.tape->record(std::move(C), {a.id, b.id}, [ia = a.id, ib = b.id, M, N, K](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad(self);
        if (t.requires_grad(ia)) {
            std::vector<T> bt(K * N);
            kernels::transpose(K, N, t.value(ib).ptr(), bt.data());
            kernels::gemm_accumulate(M, K, N, G.ptr(), bt.data(), t.grad(ia).ptr());
        }
        if (t.requires_grad(ib)) {
            kernels::gemm_tn_accumulate(K, N, M, t.value(ia).ptr(), G.ptr(), t.grad(ib).ptr());
        }
    });
}

template <typename T>
Var<T> matmul_bt(Var<T> a, Var<T> b) {
    require_same_tape(a, b);
    const auto& A = a.value();
    const auto& B = b.value();
    require_rank2(A, "matmul_bt");
    require_rank2(B, "matmul_bt");
    const std::size_t M = A.dim(0), K = A.dim(1), N = B.dim(0);
    if (B.dim(1) != K) {
        throw DimensionError("matmul_bt: inner dimensions differ " + shape_string(A.shape()) + " x " +
                             shape_string(B.shape()) + "^T");
    }
    std::vector<T> bt(K * N);
    kernels::transpose(N, K, B.ptr(), bt.data());
    BasicTensor<T> C({M, N});
    kernels::gemm(M, N, K, A.ptr(), bt.data(), C.ptr());
    return a.tape->record(std::move(C), {a.id, b.id}, [ia = a.id, ib = b.id, M, N, K](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad(self);
        if (t.requires_grad(ia)) {
            kernels::gemm_accumulate(M, K, N, G.ptr(), t.value(ib).ptr(), t.grad(ia).ptr());
        }
        if (t.requires_grad(ib)) {
            kernels::gemm_tn_accumulate(N, K, M, G.ptr(), t.value(ia).ptr(), t.grad(ib).ptr());
        }
    });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_tape(a, b);
    require_same_shape(a.value(), b.value(), "add");
    BasicTensor<T> out = a.value();
    out.set_requires_grad(false);
    const T* pb = b.value().ptr();
    T* po = out.ptr();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] += pb[i];
    return a.tape->record(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad(self);
        if (t.requires_grad(ia)) accumulate(t.grad(ia), G);
        if (t.requires_grad(ib)) accumulate(t.grad(ib), G);
    });
}

template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
    require_same_tape(x, bias);
    const auto& X = x.value();
    require_rank2(X, "add_bias");
    const std::size_t N = X.dim(0), D = X.dim(1);
    if (bias.value().size() != D) throw DimensionError("add_bias: bias length does not match columns");
    BasicTensor<T> out({N, D});
    const T* pb = bias.value().ptr();
    for (std::size_t r = 0; r < N; ++r) {
        const T* src = X.ptr() + r * D;
        T* dst = out.ptr() + r * D;
        for (std::size_t c = 0; c < D; ++c) dst[c] = src[c] + pb[c];
    }
    return x.tape->record(std::move(out), {x.id, bias.id}, [ix = x.id, ibias = bias.id, N, D](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad(self);
        if (t.requires_grad(ix)) accumulate(t.grad(ix), G);
        if (t.requires_grad(ibias)) {
            T* gb = t.grad(ibias).ptr();
            for (std::size_t r = 0; r < N; ++r) {
                for (std::size_t c = 0; c < D; ++c) gb[c] += G.ptr()[r * D + c];
            }
        }
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    require_same_tape(a, b);
    require_same_shape(a.value(), b.value(), "mul");
    BasicTensor<T> out(a.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return a.tape->record(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad(self);
        if (t.requires_grad(ia)) {
            auto& ga = t.grad(ia);
            const auto& B = t.value(ib);
            for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * B[i];
        }
        if (t.requires_grad(ib)) {
            auto& gb = t.grad(ib);
            const auto& A = t.value(ia);
            for (std::size_t i = 0; i < G.size(); ++i) gb[i] += G[i] * A[i];
        }
    });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
    BasicTensor<T> out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * factor;
    return x.tape->record(std::move(out), {x.id}, [ix = x.id, factor](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad(self);
        auto& gx = t.grad(ix);
        for (std::size_t i = 0; i < G.size(); ++i) gx[i] += G[i] * factor;
    });
}

template <typename T>
Var<T> square(Var<T> x) {
    BasicTensor<T> out(x.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * x.value()[i];
    return x.tape->record(std::move(out), {x.id}, [ix = x.id](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad(self);
        const auto& X = t.value(ix);
        auto& gx = t.grad(ix);
        for (std::size_t i = 0; i < G.size(); ++i) gx[i] += T{2} * X[i] * G[i];
    });
}

template <typename T>
Var<T> sum(Var<T> x) {
    T total{0};
    for (T v : x.value().data()) total += v;
    BasicTensor<T> out({1}, {total});
    return x.tape->record(std::move(out), {x.id}, [ix = x.id](Tape<T>& t, std::size_t self) {
        const T g = t.grad(self)[0];
        auto& gx = t.grad(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
}

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& logits) {
    BasicTensor<T> out(logits.shape());
    const std::size_t R = logits.rows(), C = logits.cols();
    for (std::size_t r = 0; r < R; ++r) {
        const T* x = logits.ptr() + r * C;
        T* y = out.ptr() + r * C;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, x[c]);
        T total{0};
        for (std::size_t c = 0; c < C; ++c) {
            y[c] = std::exp(x[c] - mx);
            total += y[c];
        }
        const T inv = T{1} / total;
        for (std::size_t c = 0; c < C; ++c) y[c] *= inv;
    }
    return out;
}

template <typename T>
std::vector<double> log_softmax_row(std::span<const T> logits) {
    double mx = -std::numeric_limits<double>::infinity();
    for (T v : logits) mx = std::max(mx, static_cast<double>(v));
    double total = 0.0;
    for (T v : logits) total += std::exp(static_cast<double>(v) - mx);
    const double lse = mx + std::log(total);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - lse;
    return out;
}

template <typename T>
Var<T> softmax(Var<T> x) {
    BasicTensor<T> out = softmax_rows(x.value());
    return x.tape->record(std::move(out), {x.id}, [ix = x.id](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad(self);
        const auto& Y = t.value(self);
        auto& gx = t.grad(ix);
        const std::size_t R = Y.rows(), C = Y.cols();
        for (std::size_t r = 0; r < R; ++r) {
            T dot{0};
            for (std::size_t c = 0; c < C; ++c) dot += G[r * C + c] * Y[r * C + c];
            for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += Y[r * C + c] * (G[r * C + c] - dot);
        }
    });
}

template <typename T>
Var<T> masked_add(Var<T> h, Var<T> c, std::span<const char> keep) {
    require_same_tape(h, c);
    require_same_shape(h.value(), c.value(), "masked_add");
    const auto& H = h.value();
    const std::size_t R = H.rows(), C = H.cols();
    if (!keep.empty() && keep.size() != R) throw DimensionError("masked_add: mask length does not match rows");
    std::vector<char> mask(keep.begin(), keep.end());
    BasicTensor<T> out = H;
    out.set_requires_grad(false);
    for (std::size_t r = 0; r < R; ++r) {
        if (!mask.empty() && mask[r] == 0) continue;
        const T* src = c.value().ptr() + r * C;
        T* dst = out.ptr() + r * C;
        for (std::size_t j = 0; j < C; ++j) dst[j] += src[j];
    }
    return h.tape->record(std::move(out), {h.id, c.id},
                          [ih = h.id, ic = c.id, mask = std::move(mask), R, C](Tape<T>& t, std::size_t self) {
                              const auto& G = t.grad(self);
                              if (t.requires_grad(ih)) accumulate(t.grad(ih), G);
                              if (t.requires_grad(ic)) {
                                  auto& gc = t.grad(ic);
                                  for (std::size_t r = 0; r < R; ++r) {
                                      if (!mask.empty() && mask[r] == 0) continue;
                                      for (std::size_t j = 0; j < C; ++j) gc[r * C + j] += G[r * C + j];
                                  }
                              }
                          });
}

template <typename T>
Var<T> rmsnorm(Var<T> x, Var<T> gain, T post_scale) {
    require_same_tape(x, gain);
    const auto& X = x.value();
    const std::size_t R = X.rows(), D = X.cols();
    if (gain.value().size() != D) throw DimensionError("rmsnorm: gain length does not match feature width");
    BasicTensor<T> out(X.shape());
    std::vector<T> inv_rms(R);
    const T* g = gain.value().ptr();
    for (std::size_t r = 0; r < R; ++r) {
        const T* xr = X.ptr() + r * D;
        T ss{0};
        for (std::size_t c = 0; c < D; ++c) ss += xr[c] * xr[c];
        const T inv = T{1} / std::sqrt(ss / static_cast<T>(D) + static_cast<T>(kNormEps));
        inv_rms[r] = inv;
        T* yr = out.ptr() + r * D;
        for (std::size_t c = 0; c < D; ++c) {
            T v = xr[c] * inv * g[c];
            yr[c] = v * post_scale;
        }
    }
    return x.tape->record(
        std::move(out), {x.id, gain.id},
        [ix = x.id, ig = gain.id, inv_rms = std::move(inv_rms), post_scale, R, D](Tape<T>& t, std::size_t self) {
            const auto& G = t.grad(self);
            const auto& X = t.value(ix);
            const T* g = t.value(ig).ptr();
            if (t.requires_grad(ix)) {
                auto& gx = t.grad(ix);
                for (std::size_t r = 0; r < R; ++r) {
                    const T* xr = X.ptr() + r * D;
                    const T* gr = G.ptr() + r * D;
                    const T inv = inv_rms[r];
                    T dot{0};
                    for (std::size_t c = 0; c < D; ++c) dot += gr[c] * post_scale * g[c] * xr[c];
                    const T coef = inv * inv * inv * dot / static_cast<T>(D);
                    for (std::size_t c = 0; c < D; ++c) {
                        gx[r * D + c] += inv * gr[c] * post_scale * g[c] - coef * xr[c];
                    }
                }
            }
            if (t.requires_grad(ig)) {
                auto& gg = t.grad(ig);
                for (std::size_t r = 0; r < R; ++r) {
                    const T* xr = X.ptr() + r * D;
                    const T* gr = G.ptr() + r * D;
                    for (std::size_t c = 0; c < D; ++c) gg[c] += gr[c] * xr[c] * inv_rms[r] * post_scale;
                }
            }
        });
}

namespace {

template <typename T>
struct RopeTable {
    std::vector<T> cos, sin;  // [seq_len, half]
};

template <typename T>
RopeTable<T> rope_table(std::size_t seq_len, std::size_t head_dim, double theta) {
    const std::size_t half = head_dim / 2;
    RopeTable<T> table{std::vector<T>(seq_len * half), std::vector<T>(seq_len * half)};
    for (std::size_t i = 0; i < half; ++i) {
        const double inv_freq = std::pow(theta, -static_cast<double>(2 * i) / static_cast<double>(head_dim));
        for (std::size_t p = 0; p < seq_len; ++p) {
            const double angle = static_cast<double>(p) * inv_freq;
            table.cos[p * half + i] = static_cast<T>(std::cos(angle));
            table.sin[p * half + i] = static_cast<T>(std::sin(angle));
        }
    }
    return table;
}

}  // namespace

template <typename T>
Var<T> rope(Var<T> x, std::size_t seq_len, std::size_t n_heads, double theta) {
    const auto& X = x.value();
    require_rank2(X, "rope");
    const std::size_t R = X.dim(0), D = X.dim(1);
    if (seq_len == 0 || R % seq_len != 0) throw DimensionError("rope: rows are not a multiple of seq_len");
    if (n_heads == 0 || D % n_heads != 0 || (D / n_heads) % 2 != 0) {
        throw DimensionError("rope: width must split into heads of even size");
    }
    const std::size_t hd = D / n_heads, half = hd / 2;
    auto table = rope_table<T>(seq_len, hd, theta);
    BasicTensor<T> out(X.shape());
    for (std::size_t r = 0; r < R; ++r) {
        const std::size_t pos = r % seq_len;
        const T* cs = table.cos.data() + pos * half;
        const T* sn = table.sin.data() + pos * half;
        for (std::size_t h = 0; h < n_heads; ++h) {
            const T* xs = X.ptr() + r * D + h * hd;
            T* ys = out.ptr() + r * D + h * hd;
            for (std::size_t i = 0; i < half; ++i) {
                const T x1 = xs[i], x2 = xs[i + half];
                ys[i] = x1 * cs[i] - x2 * sn[i];
                ys[i + half] = x1 * sn[i] + x2 * cs[i];
            }
        }
    }
    return x.tape->record(std::move(out), {x.id},
                          [ix = x.id, table = std::move(table), seq_len, n_heads, R, D, hd, half](Tape<T>& t, std::size_t self) {
                              const auto& G = t.grad(self);
                              auto& gx = t.grad(ix);
                              for (std::size_t r = 0; r < R; ++r) {
                                  const std::size_t pos = r % seq_len;
                                  const T* cs = table.cos.data() + pos * half;
                                  const T* sn = table.sin.data() + pos * half;
                                  for (std::size_t h = 0; h < n_heads; ++h) {
                                      const T* gs = G.ptr() + r * D + h * hd;
                                      T* dx = gx.ptr() + r * D + h * hd;
                                      for (std::size_t i = 0; i < half; ++i) {
                                          const T g1 = gs[i], g2 = gs[i + half];
                                          dx[i] += g1 * cs[i] + g2 * sn[i];
                                          dx[i + half] += -g1 * sn[i] + g2 * cs[i];
                                      }
                                  }
                              }
                          });
}

template <typename T>
Var<T> causal_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t seq_len, std::size_t n_heads) {
    require_same_tape(q, k);
    require_same_tape(q, v);
    const auto& Q = q.value();
    const auto& K = k.value();
    const auto& V = v.value();
    require_rank2(Q, "causal_attention");
    require_same_shape(Q, K, "causal_attention");
    require_same_shape(Q, V, "causal_attention");
    const std::size_t R = Q.dim(0), D = Q.dim(1);
    if (seq_len == 0 || R % seq_len != 0) throw DimensionError("causal_attention: rows are not a multiple of seq_len");
    if (n_heads == 0 || D % n_heads != 0) throw DimensionError("causal_attention: width not divisible by heads");
    const std::size_t B = R / seq_len, T_ = seq_len, hd = D / n_heads;
    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));

    BasicTensor<T> out({R, D});
    std::vector<T> probs(B * n_heads * T_ * T_, T{0});
    std::vector<T> qh(T_ * hd), kt(hd * T_), vh(T_ * hd), scores(T_ * T_), oh(T_ * hd);

    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t h = 0; h < n_heads; ++h) {
            for (std::size_t i = 0; i < T_; ++i) {
                const std::size_t src = (b * T_ + i) * D + h * hd;
                for (std::size_t c = 0; c < hd; ++c) {
                    qh[i * hd + c] = Q[src + c];
                    kt[c * T_ + i] = K[src + c];
                    vh[i * hd + c] = V[src + c];
                }
            }
            kernels::gemm(T_, T_, hd, qh.data(), kt.data(), scores.data());
            T* P = probs.data() + (b * n_heads + h) * T_ * T_;
            for (std::size_t i = 0; i < T_; ++i) {
                const std::size_t n = i + 1;
                T* row = scores.data() + i * T_;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < n; ++j) {
                    row[j] *= inv_sqrt;
                    mx = std::max(mx, row[j]);
                }
                T total{0};
                for (std::size_t j = 0; j < n; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    total += row[j];
                }
                const T inv = T{1} / total;
                T* pr = P + i * T_;
                for (std::size_t j = 0; j < n; ++j) pr[j] = row[j] * inv;
            }
            // Entries above the diagonal are exactly zero and contribute nothing.
            kernels::gemm(T_, hd, T_, P, vh.data(), oh.data());
            for (std::size_t i = 0; i < T_; ++i) {
                T* o = out.ptr() + (b * T_ + i) * D + h * hd;
                std::copy_n(oh.data() + i * hd, hd, o);
            }
        }
    }

    return q.tape->record(
        std::move(out), {q.id, k.id, v.id},
        [iq = q.id, ik = k.id, iv = v.id, probs = std::move(probs), B, T_, D, hd, n_heads, inv_sqrt](Tape<T>& t,
                                                                                                    std::size_t self) {
            const auto& G = t.grad(self);
            const auto& Q = t.value(iq);
            const auto& K = t.value(ik);
            const auto& V = t.value(iv);
            const bool need_q = t.requires_grad(iq), need_k = t.requires_grad(ik), need_v = t.requires_grad(iv);
            std::vector<T> qh(T_ * hd), kh(T_ * hd), vt(hd * T_), go(T_ * hd);
            std::vector<T> dp(T_ * T_), ds(T_ * T_), acc(T_ * hd);
            auto scatter = [&](std::size_t id, std::size_t b, std::size_t h) {
                T* g = t.grad(id).ptr();
                for (std::size_t i = 0; i < T_; ++i) {
                    T* dst = g + (b * T_ + i) * D + h * hd;
                    const T* s = acc.data() + i * hd;
                    for (std::size_t c = 0; c < hd; ++c) dst[c] += s[c];
                }
            };
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t h = 0; h < n_heads; ++h) {
                    for (std::size_t i = 0; i < T_; ++i) {
                        const std::size_t src = (b * T_ + i) * D + h * hd;
                        for (std::size_t c = 0; c < hd; ++c) {
                            qh[i * hd + c] = Q[src + c];
                            kh[i * hd + c] = K[src + c];
                            vt[c * T_ + i] = V[src + c];
                            go[i * hd + c] = G[src + c];
                        }
                    }
                    const T* P = probs.data() + (b * n_heads + h) * T_ * T_;
                    if (need_v) {
                        std::fill(acc.begin(), acc.end(), T{0});
                        kernels::gemm_tn_accumulate(T_, hd, T_, P, go.data(), acc.data());
                        scatter(iv, b, h);
                    }
                    if (!need_q && !need_k) continue;
                    kernels::gemm(T_, T_, hd, go.data(), vt.data(), dp.data());
                    std::fill(ds.begin(), ds.end(), T{0});
                    for (std::size_t i = 0; i < T_; ++i) {
                        const std::size_t n = i + 1;
                        const T* pr = P + i * T_;
                        const T* dpr = dp.data() + i * T_;
                        T dot{0};
                        for (std::size_t j = 0; j < n; ++j) dot += pr[j] * dpr[j];
                        T* dsr = ds.data() + i * T_;
                        for (std::size_t j = 0; j < n; ++j) dsr[j] = pr[j] * (dpr[j] - dot) * inv_sqrt;
                    }
                    if (need_q) {
                        kernels::gemm(T_, hd, T_, ds.data(), kh.data(), acc.data());
                        scatter(iq, b, h);
                    }
                    if (need_k) {
                        std::fill(acc.begin(), acc.end(), T{0});
                        kernels::gemm_tn_accumulate(T_, hd, T_, ds.data(), qh.data(), acc.data());
                        scatter(ik, b, h);
                    }
                }
            }
        });
}

template <typename T>
Var<T> swiglu(Var<T> gate, Var<T> up) {
    require_same_tape(gate, up);
    require_same_shape(gate.value(), up.value(), "swiglu");
    const auto& G = gate.value();
    const auto& U = up.value();
    BasicTensor<T> out(G.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T sig = T{1} / (T{1} + std::exp(-G[i]));
        out[i] = G[i] * sig * U[i];
    }
    return gate.tape->record(std::move(out), {gate.id, up.id}, [ig = gate.id, iu = up.id](Tape<T>& t, std::size_t self) {
        const auto& Gr = t.grad(self);
        const auto& G = t.value(ig);
        const auto& U = t.value(iu);
        const bool need_g = t.requires_grad(ig), need_u = t.requires_grad(iu);
        T* gg = need_g ? t.grad(ig).ptr() : nullptr;
        T* gu = need_u ? t.grad(iu).ptr() : nullptr;
        for (std::size_t i = 0; i < Gr.size(); ++i) {
            const T sig = T{1} / (T{1} + std::exp(-G[i]));
            const T silu = G[i] * sig;
            if (need_g) gg[i] += Gr[i] * U[i] * sig * (T{1} + G[i] * (T{1} - sig));
            if (need_u) gu[i] += Gr[i] * silu;
        }
    });
}

template <typename T>
Var<T> embedding(Var<T> table, std::span<const int> ids) {
    const auto& E = table.value();
    require_rank2(E, "embedding");
    const std::size_t V = E.dim(0), D = E.dim(1);
    std::vector<int> rows(ids.begin(), ids.end());
    BasicTensor<T> out({rows.size(), D});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || static_cast<std::size_t>(rows[r]) >= V) {
            throw InputError("token id " + std::to_string(rows[r]) + " outside vocabulary of " + std::to_string(V));
        }
        std::copy_n(E.ptr() + static_cast<std::size_t>(rows[r]) * D, D, out.ptr() + r * D);
    }
    return table.tape->record(std::move(out), {table.id}, [it = table.id, rows = std::move(rows), D](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad(self);
        auto& ge = t.grad(it);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            T* dst = ge.ptr() + static_cast<std::size_t>(rows[r]) * D;
            const T* src = G.ptr() + r * D;
            for (std::size_t c = 0; c < D; ++c) dst[c] += src[c];
        }
    });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets) {
    const auto& L = logits.value();
    require_rank2(L, "cross_entropy");
    const std::size_t N = L.dim(0), V = L.dim(1);
    if (targets.size() != N) throw DimensionError("cross_entropy: one target per row required");
    std::vector<int> tg(targets.begin(), targets.end());
    BasicTensor<T> probs = softmax_rows(L);
    double total = 0.0;
    for (std::size_t r = 0; r < N; ++r) {
        if (tg[r] < 0 || static_cast<std::size_t>(tg[r]) >= V) throw InputError("cross_entropy: target id out of range");
        const auto lp = log_softmax_row(L.row(r));
        total -= lp[static_cast<std::size_t>(tg[r])];
    }
    BasicTensor<T> out({1}, {static_cast<T>(total / static_cast<double>(N))});
    return logits.tape->record(std::move(out), {logits.id},
                               [il = logits.id, tg = std::move(tg), probs = std::move(probs), N, V](Tape<T>& t, std::size_t self) {
                                   const T g = t.grad(self)[0] / static_cast<T>(N);
                                   auto& gl = t.grad(il);
                                   for (std::size_t r = 0; r < N; ++r) {
                                       for (std::size_t c = 0; c < V; ++c) gl[r * V + c] += g * probs[r * V + c];
                                       gl[r * V + static_cast<std::size_t>(tg[r])] -= g;
                                   }
                               });
}

template <typename T>
Var<T> soft_cross_entropy(Var<T> logits, const BasicTensor<T>& target_probs) {
    const auto& L = logits.value();
    require_rank2(L, "soft_cross_entropy");
    require_same_shape(L, target_probs, "soft_cross_entropy");
    const std::size_t N = L.dim(0), V = L.dim(1);
    BasicTensor<T> probs = softmax_rows(L);
    double total = 0.0;
    for (std::size_t r = 0; r < N; ++r) {
        const auto lp = log_softmax_row(L.row(r));
        for (std::size_t c = 0; c < V; ++c) total -= static_cast<double>(target_probs[r * V + c]) * lp[c];
    }
    BasicTensor<T> out({1}, {static_cast<T>(total / static_cast<double>(N))});
    return logits.tape->record(
        std::move(out), {logits.id}, [il = logits.id, target = target_probs, probs = std::move(probs), N, V](Tape<T>& t, std::size_t self) {
            const T g = t.grad(self)[0] / static_cast<T>(N);
            auto& gl = t.grad(il);
            for (std::size_t i = 0; i < N * V; ++i) gl[i] += g * (probs[i] - target[i]);
        });
}

#define GROWLAB_INSTANTIATE_OPS(T)                                                                        \
    template Var<T> matmul<T>(Var<T>, Var<T>);                                                            \
    template Var<T> matmul_bt<T>(Var<T>, Var<T>);                                                         \
    template Var<T> add<T>(Var<T>, Var<T>);                                                               \
    template Var<T> add_bias<T>(Var<T>, Var<T>);                                                          \
    template Var<T> mul<T>(Var<T>, Var<T>);                                                               \
    template Var<T> scale<T>(Var<T>, T);                                                                  \
    template Var<T> square<T>(Var<T>);                                                                    \
    template Var<T> sum<T>(Var<T>);                                                                       \
    template Var<T> softmax<T>(Var<T>);                                                                   \
    template Var<T> masked_add<T>(Var<T>, Var<T>, std::span<const char>);                                 \
    template Var<T> rmsnorm<T>(Var<T>, Var<T>, T);                                                        \
    template Var<T> rope<T>(Var<T>, std::size_t, std::size_t, double);                                    \
    template Var<T> causal_attention<T>(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);               \
    template Var<T> swiglu<T>(Var<T>, Var<T>);                                                            \
    template Var<T> embedding<T>(Var<T>, std::span<const int>);                                           \
    template Var<T> cross_entropy<T>(Var<T>, std::span<const int>);                                       \
    template Var<T> soft_cross_entropy<T>(Var<T>, const BasicTensor<T>&);                                 \
    template BasicTensor<T> softmax_rows<T>(const BasicTensor<T>&);                                       \
    template std::vector<double> log_softmax_row<T>(std::span<const T>);

GROWLAB_INSTANTIATE_OPS(float)
GROWLAB_INSTANTIATE_OPS(double)

#undef GROWLAB_INSTANTIATE_OPS

}  // namespace growlab
