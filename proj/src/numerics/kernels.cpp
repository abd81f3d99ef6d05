#include "growlab/numerics/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace growlab::kernels {

namespace {

constexpr std::size_t kRowBlock = 4;
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 18;

// A tile of C (kRowBlock rows x 4 vectors) stays in registers while k runs
// from 0 to K-1, so each element still sees its terms in sequential order.
typedef float vfloat __attribute__((vector_size(64)));
typedef double vdouble __attribute__((vector_size(64)));

template <typename T>
struct Vec;
template <>
struct Vec<float> {
    using type = vfloat;
    static constexpr std::size_t width = 16;
};
template <>
struct Vec<double> {
    using type = vdouble;
    static constexpr std::size_t width = 8;
};

template <typename T>
inline typename Vec<T>::type load(const T* p) {
    typename Vec<T>::type v;
    __builtin_memcpy(&v, p, sizeof v);
    return v;
}

template <typename T>
inline void store(T* p, typename Vec<T>::type v) {
    __builtin_memcpy(p, &v, sizeof v);
}

template <typename T, std::size_t MR, std::size_t NV>
void tile(std::size_t K, std::size_t N, const T* A, std::size_t ars, std::size_t aks, const T* B, T* C) {
    using V = typename Vec<T>::type;
    constexpr std::size_t W = Vec<T>::width;
    V acc[MR][NV];
#pragma GCC unroll 8
    for (std::size_t r = 0; r < MR; ++r) {
#pragma GCC unroll 4
        for (std::size_t v = 0; v < NV; ++v) acc[r][v] = load(C + r * N + v * W);
    }
    for (std::size_t k = 0; k < K; ++k) {
        const T* b = B + k * N;
        V bv[NV];
#pragma GCC unroll 4
        for (std::size_t v = 0; v < NV; ++v) bv[v] = load(b + v * W);
#pragma GCC unroll 8
        for (std::size_t r = 0; r < MR; ++r) {
            const T a = A[r * ars + k * aks];
#pragma GCC unroll 4
            for (std::size_t v = 0; v < NV; ++v) acc[r][v] += a * bv[v];
        }
    }
#pragma GCC unroll 8
    for (std::size_t r = 0; r < MR; ++r) {
#pragma GCC unroll 4
        for (std::size_t v = 0; v < NV; ++v) store(C + r * N + v * W, acc[r][v]);
    }
}

// Element (r, k) of A lives at A[r * ars + k * aks], so a transposed A needs no copy.
template <typename T, std::size_t NV>
void column_panel(std::size_t rows, std::size_t N, std::size_t K, const T* A, std::size_t ars, std::size_t aks,
                  const T* B, T* C) {
    if (rows == kRowBlock) {
        tile<T, kRowBlock, NV>(K, N, A, ars, aks, B, C);
    } else {
        for (std::size_t r = 0; r < rows; ++r) tile<T, 1, NV>(K, N, A + r * ars, ars, aks, B, C + r * N);
    }
}

template <typename T>
void gemm_rows(std::size_t row_begin, std::size_t rows, std::size_t N, std::size_t K, const T* A, std::size_t ars,
               std::size_t aks, const T* B, T* C) {
    constexpr std::size_t W = Vec<T>::width;
    const T* a = A + row_begin * ars;
    T* c = C + row_begin * N;
    std::size_t j = 0;
    for (; j + 4 * W <= N; j += 4 * W) column_panel<T, 4>(rows, N, K, a, ars, aks, B + j, c + j);
    if (j + 2 * W <= N) {
        column_panel<T, 2>(rows, N, K, a, ars, aks, B + j, c + j);
        j += 2 * W;
    }
    if (j + W <= N) {
        column_panel<T, 1>(rows, N, K, a, ars, aks, B + j, c + j);
        j += W;
    }
    if (j == N) return;
    for (std::size_t r = 0; r < rows; ++r) {
        T* __restrict cr = c + r * N;
        const T* ar = a + r * ars;
        for (std::size_t jj = j; jj < N; ++jj) {
            T s = cr[jj];
            for (std::size_t k = 0; k < K; ++k) s += ar[k * aks] * B[k * N + jj];
            cr[jj] = s;
        }
    }
}

template <typename T>
void gemm_impl(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t ars, std::size_t aks, const T* B,
               T* C) {
    const std::size_t blocks = (M + kRowBlock - 1) / kRowBlock;
    const bool parallel = M * N * K >= kParallelWork && max_threads() > 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel) num_threads(max_threads())
#endif
    for (std::ptrdiff_t blk = 0; blk < static_cast<std::ptrdiff_t>(blocks); ++blk) {
        const std::size_t begin = static_cast<std::size_t>(blk) * kRowBlock;
        gemm_rows(begin, std::min(kRowBlock, M - begin), N, K, A, ars, aks, B, C);
    }
    (void)parallel;
}

}  // namespace

int max_threads() {
    static const int cached = [] {
        int hw = 1;
#ifdef _OPENMP
        hw = omp_get_num_procs();
#endif
        if (const char* env = std::getenv("GROWLAB_THREADS")) {
            try {
                const int cap = std::stoi(env);
                if (cap >= 1) hw = std::min(hw, cap);
            } catch (...) {
                // Unparseable values leave the hardware default in place.
            }
        }
        return std::max(hw, 1);
    }();
    return cached;
}

template <typename T>
void gemm(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    std::fill(C, C + M * N, T{0});
    gemm_impl(M, N, K, A, K, 1, B, C);
}

template <typename T>
void gemm_accumulate(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    gemm_impl(M, N, K, A, K, 1, B, C);
}

template <typename T>
void gemm_tn_accumulate(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    gemm_impl(M, N, K, A, 1, M, B, C);
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
    constexpr std::size_t tile = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += tile) {
        const std::size_t r1 = std::min(rows, r0 + tile);
        for (std::size_t c0 = 0; c0 < cols; c0 += tile) {
            const std::size_t c1 = std::min(cols, c0 + tile);
            for (std::size_t r = r0; r < r1; ++r) {
                for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
            }
        }
    }
}

template void gemm<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_accumulate<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_accumulate<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_tn_accumulate<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_tn_accumulate<double>(std::size_t, std::size_t, std::size_t, const double*, const double*,
                                         double*);
template void transpose<float>(std::size_t, std::size_t, const float*, float*);
template void transpose<double>(std::size_t, std::size_t, const double*, double*);

}  // namespace growlab::kernels
