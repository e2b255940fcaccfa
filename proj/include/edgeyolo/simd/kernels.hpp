#pragma once

// Data-parallel inner loops behind the nn layers. Every kernel has a scalar
// reference implementation and, on x86-64, an AVX2/FMA variant compiled in a
// separate translation unit. The variant is picked once at startup from
// CPUID; EDGEYOLO_ISA=scalar in the environment forces the reference path.

#include <cstddef>
#include <string_view>

namespace edgeyolo::simd {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

/// Strided GEMM: C[i, j] += sum_k A(i, k) * B[k * ldb + j] where
/// A(i, k) = A[i * a_row + k * a_col]. Covers both A and A^T operands.
template <class T>
using GemmFn = void (*)(int m, int n, int k, const T* a, std::ptrdiff_t a_row,
                        std::ptrdiff_t a_col, const T* b, std::ptrdiff_t ldb,
                        T* c, std::ptrdiff_t ldc);

/// C[i, j] += sum_k A[i * lda + k] * B[j * ldb + k]  (A times B^T).
template <class T>
using GemmNtFn = void (*)(int m, int n, int k, const T* a, std::ptrdiff_t lda,
                          const T* b, std::ptrdiff_t ldb, T* c,
                          std::ptrdiff_t ldc);

/// y[i] = y[i] + alpha * x[i]   (separate multiply and add, never fused)
template <class T>
using AxpyFn = void (*)(std::size_t n, T alpha, const T* x, T* y);

/// y[i] = x[i] * scale + shift
template <class T>
using AffineFn = void (*)(std::size_t n, T scale, T shift, const T* x, T* y);

/// y[i] = x[i] >= 0 ? x[i] : slope * x[i]
template <class T>
using LeakyFn = void (*)(std::size_t n, T slope, const T* x, T* y);

template <class T>
struct KernelSet {
  GemmFn<T> gemm;
  GemmNtFn<T> gemm_nt;
  AxpyFn<T> axpy;
  AffineFn<T> affine;
  LeakyFn<T> leaky;
};

struct KernelTable {
  Isa isa;
  KernelSet<float> f32;
  KernelSet<double> f64;
};

const KernelTable& scalar_kernels();
/// Null when the binary was built without x86 AVX2 support.
const KernelTable* avx2_kernels();

bool cpu_supports(Isa isa);

/// Table selected at startup (or by the last set_isa call).
const KernelTable& active();
Isa active_isa();
/// Throws std::runtime_error if the CPU cannot run the requested variant.
void set_isa(Isa isa);

template <class T>
const KernelSet<T>& kernels_for(const KernelTable& t) {
  if constexpr (sizeof(T) == sizeof(float)) {
    return t.f32;
  } else {
    return t.f64;
  }
}

template <class T>
const KernelSet<T>& kernels() {
  return kernels_for<T>(active());
}

/// RAII override of the active ISA, restoring the previous one on exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : prev_(active_isa()) { set_isa(isa); }
  ~ScopedIsa() { set_isa(prev_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa prev_;
};

}  // namespace edgeyolo::simd
