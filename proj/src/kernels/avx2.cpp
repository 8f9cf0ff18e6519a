#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstdint>

#include "framing/kernels.hpp"

// Functions carry a target attribute instead of compiling the translation
// unit with -mavx2, so no AVX2 code leaks into shared inline/template
// instantiations that non-AVX2 paths might pick up at link time.
#define FRAMING_AVX2 __attribute__((target("avx2,fma")))

namespace framing::kernels {
namespace {

FRAMING_AVX2 inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  const __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// exp(x) for x <= 0, Cephes rational approximation (about 1 ulp).
FRAMING_AVX2 inline __m256d exp_nonpositive(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125E-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212E-6);
  const __m256d p0 = _mm256_set1_pd(1.26177193074810590878E-4);
  const __m256d p1 = _mm256_set1_pd(3.02994407707441961300E-2);
  const __m256d p2 = _mm256_set1_pd(9.99999999999999999910E-1);
  const __m256d q0 = _mm256_set1_pd(3.00198505138664455042E-6);
  const __m256d q1 = _mm256_set1_pd(2.52448340349684104192E-3);
  const __m256d q2 = _mm256_set1_pd(2.27265548208155028766E-1);
  const __m256d q3 = _mm256_set1_pd(2.00000000000000000009E0);
  const __m256d magic = _mm256_set1_pd(6755399441055744.0);  // 2^52 + 2^51

  x = _mm256_max_pd(x, _mm256_set1_pd(-700.0));
  const __m256d fx = _mm256_round_pd(_mm256_fmadd_pd(x, log2e, _mm256_set1_pd(0.5)),
                                     _MM_FROUND_TO_NEG_INF | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(fx, c1, x);
  x = _mm256_fnmadd_pd(fx, c2, x);
  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_fmadd_pd(p0, xx, p1);
  px = _mm256_fmadd_pd(px, xx, p2);
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_fmadd_pd(q0, xx, q1);
  qx = _mm256_fmadd_pd(qx, xx, q2);
  qx = _mm256_fmadd_pd(qx, xx, q3);
  __m256d r = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  r = _mm256_fmadd_pd(_mm256_set1_pd(2.0), r, _mm256_set1_pd(1.0));

  const __m256i n = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(fx, magic)),
                                     _mm256_castpd_si256(magic));
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(n, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(r, _mm256_castsi256_pd(bits));
}

// log(u) for u in [1, 2], Cephes log(1+x) rational form.
FRAMING_AVX2 inline __m256d log_1_to_2(__m256d u) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d ge = _mm256_cmp_pd(u, _mm256_set1_pd(1.41421356237309504880), _CMP_GE_OQ);
  const __m256d x = _mm256_blendv_pd(_mm256_sub_pd(u, one),
                                     _mm256_fmsub_pd(u, _mm256_set1_pd(0.5), one), ge);
  const __m256d e = _mm256_and_pd(ge, one);
  const __m256d z = _mm256_mul_pd(x, x);

  __m256d p = _mm256_set1_pd(1.01875663804580931796E-4);
  p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(4.97494994976747001425E-1));
  p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(4.70579119878881725854E0));
  p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(1.44989225341610930846E1));
  p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(1.79368678507819816313E1));
  p = _mm256_fmadd_pd(p, x, _mm256_set1_pd(7.70838733755885391666E0));
  __m256d q = _mm256_add_pd(x, _mm256_set1_pd(1.12873587189167450590E1));
  q = _mm256_fmadd_pd(q, x, _mm256_set1_pd(4.52279145837532221105E1));
  q = _mm256_fmadd_pd(q, x, _mm256_set1_pd(8.29875266912776603211E1));
  q = _mm256_fmadd_pd(q, x, _mm256_set1_pd(7.11544750618563894466E1));
  q = _mm256_fmadd_pd(q, x, _mm256_set1_pd(2.31251620126765340583E1));

  __m256d y = _mm256_mul_pd(x, _mm256_div_pd(_mm256_mul_pd(z, p), q));
  y = _mm256_fnmadd_pd(e, _mm256_set1_pd(2.121944400546905827679e-4), y);
  y = _mm256_fnmadd_pd(_mm256_set1_pd(0.5), z, y);
  __m256d r = _mm256_add_pd(x, y);
  return _mm256_fmadd_pd(e, _mm256_set1_pd(0.693359375), r);
}

// log1p(e) for e in [0, 1].
FRAMING_AVX2 inline __m256d log1p_unit(__m256d e) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d u = _mm256_add_pd(one, e);
  const __m256d um1 = _mm256_sub_pd(u, one);
  const __m256d exact = _mm256_cmp_pd(um1, _mm256_setzero_pd(), _CMP_EQ_OQ);
  // Corrects the rounding of 1+e: log1p(e) = log(u) * e / (u - 1).
  const __m256d safe = _mm256_blendv_pd(um1, one, exact);
  const __m256d corrected = _mm256_mul_pd(log_1_to_2(u), _mm256_div_pd(e, safe));
  return _mm256_blendv_pd(corrected, e, exact);
}

FRAMING_AVX2 double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
    s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), s2);
    s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), s3);
  }
  for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  double s = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

FRAMING_AVX2 double weighted_dot_avx2(const double* w, const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d wa0 = _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(a + i));
    const __m256d wa1 = _mm256_mul_pd(_mm256_loadu_pd(w + i + 4), _mm256_loadu_pd(a + i + 4));
    s0 = _mm256_fmadd_pd(wa0, _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(wa1, _mm256_loadu_pd(b + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(a + i)),
                         _mm256_loadu_pd(b + i), s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += w[i] * a[i] * b[i];
  return s;
}

FRAMING_AVX2 double sum_avx2(const double* a, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_add_pd(s0, _mm256_loadu_pd(a + i));
    s1 = _mm256_add_pd(s1, _mm256_loadu_pd(a + i + 4));
  }
  for (; i + 4 <= n; i += 4) s0 = _mm256_add_pd(s0, _mm256_loadu_pd(a + i));
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += a[i];
  return s;
}

FRAMING_AVX2 void axpby_avx2(double alpha, const double* x, double beta, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d vb = _mm256_set1_pd(beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_mul_pd(vb, _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i, r);
  }
  for (; i < n; ++i) y[i] = alpha * x[i] + beta * y[i];
}

FRAMING_AVX2 double logistic_avx2(const double* eta, const double* y, double* mu, double* w, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(eta + i);
    const __m256d e = exp_nonpositive(_mm256_or_pd(v, sign));  // exp(-|eta|)
    const __m256d inv = _mm256_div_pd(one, _mm256_add_pd(one, e));
    const __m256d pos = _mm256_cmp_pd(v, zero, _CMP_GE_OQ);
    _mm256_storeu_pd(mu + i, _mm256_blendv_pd(_mm256_mul_pd(e, inv), inv, pos));
    _mm256_storeu_pd(w + i, _mm256_mul_pd(_mm256_mul_pd(e, inv), inv));
    const __m256d softplus = _mm256_add_pd(_mm256_max_pd(v, zero), log1p_unit(e));
    acc = _mm256_add_pd(acc, _mm256_fmsub_pd(_mm256_loadu_pd(y + i), v, softplus));
  }
  double ll = hsum(acc);
  for (; i < n; ++i) {
    const double e = std::exp(-std::fabs(eta[i]));
    const double inv = 1.0 / (1.0 + e);
    mu[i] = eta[i] >= 0.0 ? inv : e * inv;
    w[i] = e * inv * inv;
    ll += y[i] * eta[i] - (std::fmax(eta[i], 0.0) + std::log1p(e));
  }
  return ll;
}

}  // namespace

namespace detail {
const KernelTable kAvx2Table = {
    Isa::avx2, dot_avx2, weighted_dot_avx2, sum_avx2, axpby_avx2, logistic_avx2,
};
}  // namespace detail

}  // namespace framing::kernels

#endif
