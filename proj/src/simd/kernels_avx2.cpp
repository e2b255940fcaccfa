// Compiled with -mavx2 -mfma. Nothing here may run before cpu_supports(Avx2)
// has been checked by the dispatcher.

#include "edgeyolo/simd/kernels.hpp"

#if defined(EDGEYOLO_HAVE_AVX2)

#include <immintrin.h>

namespace edgeyolo::simd {
namespace {

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr int width = 8;
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V set1(T x) { return _mm256_set1_ps(x); }
  static V zero() { return _mm256_setzero_ps(); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static V mul(V a, V b) { return _mm256_mul_ps(a, b); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static V leaky(V x, V slope) {
    const V neg = _mm256_cmp_ps(x, zero(), _CMP_LT_OQ);
    return _mm256_blendv_ps(x, mul(x, slope), neg);
  }
  static T hsum(V v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
  }
};

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr int width = 4;
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V set1(T x) { return _mm256_set1_pd(x); }
  static V zero() { return _mm256_setzero_pd(); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static V mul(V a, V b) { return _mm256_mul_pd(a, b); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V leaky(V x, V slope) {
    const V neg = _mm256_cmp_pd(x, zero(), _CMP_LT_OQ);
    return _mm256_blendv_pd(x, mul(x, slope), neg);
  }
  static T hsum(V v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d h = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, h));
  }
};

// Register tile: 4 rows of C by 2 vectors, accumulated over the full k range.
template <class S>
void gemm_avx2(int m, int n, int k, const typename S::T* a, std::ptrdiff_t a_row,
               std::ptrdiff_t a_col, const typename S::T* b, std::ptrdiff_t ldb,
               typename S::T* c, std::ptrdiff_t ldc) {
  using T = typename S::T;
  using V = typename S::V;
  constexpr int W = S::width;
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    const T* a0 = a + (i + 0) * a_row;
    const T* a1 = a + (i + 1) * a_row;
    const T* a2 = a + (i + 2) * a_row;
    const T* a3 = a + (i + 3) * a_row;
    T* c0 = c + (i + 0) * ldc;
    T* c1 = c + (i + 1) * ldc;
    T* c2 = c + (i + 2) * ldc;
    T* c3 = c + (i + 3) * ldc;
    int j = 0;
    for (; j + 2 * W <= n; j += 2 * W) {
      V r00 = S::load(c0 + j), r01 = S::load(c0 + j + W);
      V r10 = S::load(c1 + j), r11 = S::load(c1 + j + W);
      V r20 = S::load(c2 + j), r21 = S::load(c2 + j + W);
      V r30 = S::load(c3 + j), r31 = S::load(c3 + j + W);
      for (int p = 0; p < k; ++p) {
        const T* bp = b + p * ldb + j;
        const V b0 = S::load(bp);
        const V b1 = S::load(bp + W);
        const std::ptrdiff_t off = p * a_col;
        V av = S::set1(a0[off]);
        r00 = S::fma(av, b0, r00);
        r01 = S::fma(av, b1, r01);
        av = S::set1(a1[off]);
        r10 = S::fma(av, b0, r10);
        r11 = S::fma(av, b1, r11);
        av = S::set1(a2[off]);
        r20 = S::fma(av, b0, r20);
        r21 = S::fma(av, b1, r21);
        av = S::set1(a3[off]);
        r30 = S::fma(av, b0, r30);
        r31 = S::fma(av, b1, r31);
      }
      S::store(c0 + j, r00);
      S::store(c0 + j + W, r01);
      S::store(c1 + j, r10);
      S::store(c1 + j + W, r11);
      S::store(c2 + j, r20);
      S::store(c2 + j + W, r21);
      S::store(c3 + j, r30);
      S::store(c3 + j + W, r31);
    }
    for (; j + W <= n; j += W) {
      V r0 = S::load(c0 + j), r1 = S::load(c1 + j);
      V r2 = S::load(c2 + j), r3 = S::load(c3 + j);
      for (int p = 0; p < k; ++p) {
        const V bv = S::load(b + p * ldb + j);
        const std::ptrdiff_t off = p * a_col;
        r0 = S::fma(S::set1(a0[off]), bv, r0);
        r1 = S::fma(S::set1(a1[off]), bv, r1);
        r2 = S::fma(S::set1(a2[off]), bv, r2);
        r3 = S::fma(S::set1(a3[off]), bv, r3);
      }
      S::store(c0 + j, r0);
      S::store(c1 + j, r1);
      S::store(c2 + j, r2);
      S::store(c3 + j, r3);
    }
    for (; j < n; ++j) {
      T s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
      for (int p = 0; p < k; ++p) {
        const T bv = b[p * ldb + j];
        const std::ptrdiff_t off = p * a_col;
        s0 += a0[off] * bv;
        s1 += a1[off] * bv;
        s2 += a2[off] * bv;
        s3 += a3[off] * bv;
      }
      c0[j] = s0;
      c1[j] = s1;
      c2[j] = s2;
      c3[j] = s3;
    }
  }
  for (; i < m; ++i) {
    const T* ai = a + i * a_row;
    T* ci = c + i * ldc;
    int j = 0;
    for (; j + W <= n; j += W) {
      V r = S::load(ci + j);
      for (int p = 0; p < k; ++p) {
        r = S::fma(S::set1(ai[p * a_col]), S::load(b + p * ldb + j), r);
      }
      S::store(ci + j, r);
    }
    for (; j < n; ++j) {
      T s = ci[j];
      for (int p = 0; p < k; ++p) {
        s += ai[p * a_col] * b[p * ldb + j];
      }
      ci[j] = s;
    }
  }
}

template <class S>
void gemm_nt_avx2(int m, int n, int k, const typename S::T* a, std::ptrdiff_t lda,
                  const typename S::T* b, std::ptrdiff_t ldb, typename S::T* c,
                  std::ptrdiff_t ldc) {
  using T = typename S::T;
  using V = typename S::V;
  constexpr int W = S::width;
  for (int i = 0; i < m; ++i) {
    const T* ai = a + i * lda;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      const T* b0 = b + (j + 0) * ldb;
      const T* b1 = b + (j + 1) * ldb;
      const T* b2 = b + (j + 2) * ldb;
      const T* b3 = b + (j + 3) * ldb;
      V s0 = S::zero(), s1 = S::zero(), s2 = S::zero(), s3 = S::zero();
      int p = 0;
      for (; p + W <= k; p += W) {
        const V av = S::load(ai + p);
        s0 = S::fma(av, S::load(b0 + p), s0);
        s1 = S::fma(av, S::load(b1 + p), s1);
        s2 = S::fma(av, S::load(b2 + p), s2);
        s3 = S::fma(av, S::load(b3 + p), s3);
      }
      T t0 = S::hsum(s0), t1 = S::hsum(s1), t2 = S::hsum(s2), t3 = S::hsum(s3);
      for (; p < k; ++p) {
        t0 += ai[p] * b0[p];
        t1 += ai[p] * b1[p];
        t2 += ai[p] * b2[p];
        t3 += ai[p] * b3[p];
      }
      c[i * ldc + j + 0] += t0;
      c[i * ldc + j + 1] += t1;
      c[i * ldc + j + 2] += t2;
      c[i * ldc + j + 3] += t3;
    }
    for (; j < n; ++j) {
      const T* bj = b + j * ldb;
      V s = S::zero();
      int p = 0;
      for (; p + W <= k; p += W) {
        s = S::fma(S::load(ai + p), S::load(bj + p), s);
      }
      T t = S::hsum(s);
      for (; p < k; ++p) {
        t += ai[p] * bj[p];
      }
      c[i * ldc + j] += t;
    }
  }
}

template <class S>
void axpy_avx2(std::size_t n, typename S::T alpha, const typename S::T* x,
               typename S::T* y) {
  const auto av = S::set1(alpha);
  std::size_t i = 0;
  for (; i + S::width <= n; i += S::width) {
    S::store(y + i, S::add(S::load(y + i), S::mul(av, S::load(x + i))));
  }
  for (; i < n; ++i) {
    y[i] = y[i] + alpha * x[i];
  }
}

template <class S>
void affine_avx2(std::size_t n, typename S::T scale, typename S::T shift,
                 const typename S::T* x, typename S::T* y) {
  const auto sv = S::set1(scale);
  const auto bv = S::set1(shift);
  std::size_t i = 0;
  for (; i + S::width <= n; i += S::width) {
    S::store(y + i, S::add(S::mul(S::load(x + i), sv), bv));
  }
  for (; i < n; ++i) {
    y[i] = x[i] * scale + shift;
  }
}

template <class S>
void leaky_avx2(std::size_t n, typename S::T slope, const typename S::T* x,
                typename S::T* y) {
  const auto sv = S::set1(slope);
  std::size_t i = 0;
  for (; i + S::width <= n; i += S::width) {
    S::store(y + i, S::leaky(S::load(x + i), sv));
  }
  for (; i < n; ++i) {
    y[i] = x[i] >= 0 ? x[i] : slope * x[i];
  }
}

template <class S>
constexpr KernelSet<typename S::T> avx2_set() {
  return {&gemm_avx2<S>, &gemm_nt_avx2<S>, &axpy_avx2<S>, &affine_avx2<S>,
          &leaky_avx2<S>};
}

const KernelTable kAvx2{Isa::Avx2, avx2_set<F32>(), avx2_set<F64>()};

}  // namespace

const KernelTable* avx2_kernels() { return &kAvx2; }

}  // namespace edgeyolo::simd

#else

namespace edgeyolo::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace edgeyolo::simd

#endif
