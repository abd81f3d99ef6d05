#pragma once

#include <cstddef>

namespace growlab::kernels {

// Raw row-major kernels. Every output element is accumulated sequentially
// over the inner dimension (k = 0, 1, ..., K-1), so results depend only on
// the inputs, never on the thread count.

/// C[M,N] = A[M,K] * B[K,N]  (C is overwritten).
template <typename T>
void gemm(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C);

/// C[M,N] += A[M,K] * B[K,N], with the running sum seeded from C.
template <typename T>
void gemm_accumulate(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C);

/// C[M,N] += transpose(A[K,M]) * B[K,N], without materializing the transpose.
template <typename T>
void gemm_tn_accumulate(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C);

/// out[cols, rows] = transpose(in[rows, cols]).
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out);

/// Worker count: min(GROWLAB_THREADS, hardware threads); 1 without OpenMP.
int max_threads();

}  // namespace growlab::kernels
