#include "edgeyolo/simd/kernels.hpp"

namespace edgeyolo::simd {
namespace {

template <class T>
void gemm_ref(int m, int n, int k, const T* a, std::ptrdiff_t a_row,
              std::ptrdiff_t a_col, const T* b, std::ptrdiff_t ldb, T* c,
              std::ptrdiff_t ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (int p = 0; p < k; ++p) {
      const T av = a[i * a_row + p * a_col];
      const T* brow = b + p * ldb;
      for (int j = 0; j < n; ++j) {
        crow[j] = crow[j] + av * brow[j];
      }
    }
  }
}

template <class T>
void gemm_nt_ref(int m, int n, int k, const T* a, std::ptrdiff_t lda,
                 const T* b, std::ptrdiff_t ldb, T* c, std::ptrdiff_t ldc) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + i * lda;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + j * ldb;
      T sum{};
      for (int p = 0; p < k; ++p) {
        sum = sum + arow[p] * brow[p];
      }
      c[i * ldc + j] += sum;
    }
  }
}

template <class T>
void axpy_ref(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = y[i] + alpha * x[i];
  }
}

template <class T>
void affine_ref(std::size_t n, T scale, T shift, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = x[i] * scale + shift;
  }
}

template <class T>
void leaky_ref(std::size_t n, T slope, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = x[i] >= T{0} ? x[i] : slope * x[i];
  }
}

template <class T>
constexpr KernelSet<T> reference_set() {
  return {&gemm_ref<T>, &gemm_nt_ref<T>, &axpy_ref<T>, &affine_ref<T>,
          &leaky_ref<T>};
}

const KernelTable kScalar{Isa::Scalar, reference_set<float>(),
                          reference_set<double>()};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace edgeyolo::simd
