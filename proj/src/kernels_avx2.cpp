// AVX2+FMA variants of the kernel table. This translation unit is compiled
// with -mavx2 -mfma and must only be entered after the dispatcher has
// confirmed CPU support.

#include "gazealign/kernels.hpp"

#if defined(GAZEALIGN_BUILD_AVX2)

#include <immintrin.h>

#include <cfloat>
#include <cmath>
#include <cstdint>

namespace gazealign::kern {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, swapped));
}

// exp(x) with Cody-Waite range reduction and a degree-13 polynomial.
// Agrees with std::exp to a few ulp on [-708, 709] and tracks it through
// the gradual-underflow band down to about -745; only arguments whose
// true exponential rounds to zero flush to zero.
inline __m256d vexp(__m256d x) {
  const __m256d kLog2E = _mm256_set1_pd(1.44269504088896340736);
  const __m256d kLn2Hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d kLn2Lo = _mm256_set1_pd(1.90821492927058770002e-10);
  const __m256d kLo = _mm256_set1_pd(-746.0);
  const __m256d kHi = _mm256_set1_pd(709.0);
  // exp(x) < DBL_TRUE_MIN/2 below this; such lanes round to zero anyway
  const __m256d kFlush = _mm256_set1_pd(-745.2);

  __m256d clamped = _mm256_min_pd(_mm256_max_pd(x, kLo), kHi);
  __m256d kf = _mm256_round_pd(_mm256_mul_pd(clamped, kLog2E),
                               _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(kf, kLn2Hi, clamped);
  r = _mm256_fnmadd_pd(kf, kLn2Lo, r);

  __m256d p = _mm256_set1_pd(1.6059043836821613e-10);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.0876756987868098e-09));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.5052108385441720e-08));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985888e-07));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985893e-06));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.4801587301587302e-05));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.9841269841269841e-04));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.3888888888888889e-03));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(8.3333333333333332e-03));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(4.1666666666666664e-02));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.6666666666666666e-01));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  // 2^k in two factors so exponents below -1022 denormalize instead of
  // wrecking the biased-exponent trick
  __m128i k32 = _mm256_cvtpd_epi32(kf);
  __m128i k32_a = _mm_srai_epi32(k32, 1);
  __m128i k32_b = _mm_sub_epi32(k32, k32_a);
  const __m256i bias = _mm256_set1_epi64x(1023);
  __m256d two_a = _mm256_castsi256_pd(_mm256_slli_epi64(
      _mm256_add_epi64(_mm256_cvtepi32_epi64(k32_a), bias), 52));
  __m256d two_b = _mm256_castsi256_pd(_mm256_slli_epi64(
      _mm256_add_epi64(_mm256_cvtepi32_epi64(k32_b), bias), 52));
  __m256d result = _mm256_mul_pd(_mm256_mul_pd(p, two_a), two_b);

  __m256d keep = _mm256_cmp_pd(x, kFlush, _CMP_GT_OQ);
  return _mm256_and_pd(result, keep);
}

// log(x) for normal positive doubles: mantissa folded into [sqrt(1/2),
// sqrt(2)), atanh series in s = (m-1)/(m+1). Callers mask zeros and
// fall back to scalar code for subnormal or non-positive lanes.
inline __m256d vlog(__m256d x) {
  const __m256i kExpMask = _mm256_set1_epi64x(0x7ffLL << 52);
  const __m256i kOneBits = _mm256_set1_epi64x(1023LL << 52);
  const __m256i kMagic = _mm256_set1_epi64x(0x4330000000000000LL);
  const __m256d kTwo52 = _mm256_set1_pd(4503599627370496.0);
  const __m256d kSqrt2 = _mm256_set1_pd(1.41421356237309514547);
  const __m256d kLn2Hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d kLn2Lo = _mm256_set1_pd(1.90821492927058770002e-10);

  __m256i bits = _mm256_castpd_si256(x);
  __m256i exp_bits = _mm256_srli_epi64(_mm256_and_si256(bits, kExpMask), 52);
  __m256d e = _mm256_sub_pd(
      _mm256_castsi256_pd(_mm256_or_si256(exp_bits, kMagic)), kTwo52);
  e = _mm256_sub_pd(e, _mm256_set1_pd(1023.0));
  __m256d m = _mm256_castsi256_pd(
      _mm256_or_si256(_mm256_andnot_si256(kExpMask, bits), kOneBits));

  __m256d fold = _mm256_cmp_pd(m, kSqrt2, _CMP_GT_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), fold);
  e = _mm256_blendv_pd(e, _mm256_add_pd(e, _mm256_set1_pd(1.0)), fold);

  __m256d one = _mm256_set1_pd(1.0);
  __m256d s = _mm256_div_pd(_mm256_sub_pd(m, one), _mm256_add_pd(m, one));
  __m256d t = _mm256_mul_pd(s, s);

  __m256d w = _mm256_set1_pd(1.0 / 19.0);
  w = _mm256_fmadd_pd(w, t, _mm256_set1_pd(1.0 / 17.0));
  w = _mm256_fmadd_pd(w, t, _mm256_set1_pd(1.0 / 15.0));
  w = _mm256_fmadd_pd(w, t, _mm256_set1_pd(1.0 / 13.0));
  w = _mm256_fmadd_pd(w, t, _mm256_set1_pd(1.0 / 11.0));
  w = _mm256_fmadd_pd(w, t, _mm256_set1_pd(1.0 / 9.0));
  w = _mm256_fmadd_pd(w, t, _mm256_set1_pd(1.0 / 7.0));
  w = _mm256_fmadd_pd(w, t, _mm256_set1_pd(1.0 / 5.0));
  w = _mm256_fmadd_pd(w, t, _mm256_set1_pd(1.0 / 3.0));

  __m256d two_s = _mm256_add_pd(s, s);
  __m256d logm = _mm256_fmadd_pd(_mm256_mul_pd(two_s, t), w, two_s);

  __m256d res = _mm256_fmadd_pd(e, kLn2Hi, logm);
  return _mm256_fmadd_pd(e, kLn2Lo, res);
}

double sum_impl(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double total = hsum(acc);
  for (; i < n; ++i) total += x[i];
  return total;
}

double dot_impl(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  double total = hsum(acc);
  for (; i < n; ++i) total += x[i] * y[i];
  return total;
}

double sum_sq_diff_impl(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double total = hsum(acc);
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    total += d * d;
  }
  return total;
}

double max_value_impl(const double* x, std::size_t n) {
  std::size_t i = 0;
  double best = x[0];
  if (n >= 4) {
    __m256d acc = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4)
      acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
    best = hmax(acc);
  } else {
    i = 1;
  }
  for (; i < n; ++i) best = x[i] > best ? x[i] : best;
  return best;
}

void scale_impl(double* x, std::size_t n, double a) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
  for (; i < n; ++i) x[i] *= a;
}

void axpy_impl(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void mean2_impl(const double* x, const double* y, double* out, std::size_t n) {
  const __m256d half = _mm256_set1_pd(0.5);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        out + i,
        _mm256_mul_pd(half, _mm256_add_pd(_mm256_loadu_pd(x + i),
                                          _mm256_loadu_pd(y + i))));
  for (; i < n; ++i) out[i] = 0.5 * (x[i] + y[i]);
}

double exp_shift_sum_impl(const double* x, double* out, std::size_t n,
                          double shift) {
  const __m256d vshift = _mm256_set1_pd(shift);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d e = vexp(_mm256_sub_pd(_mm256_loadu_pd(x + i), vshift));
    _mm256_storeu_pd(out + i, e);
    acc = _mm256_add_pd(acc, e);
  }
  double total = hsum(acc);
  for (; i < n; ++i) {
    out[i] = std::exp(x[i] - shift);
    total += out[i];
  }
  return total;
}

double kl_sum_impl(const double* p, const double* q, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d tiny = _mm256_set1_pd(DBL_MIN);
  __m256d acc = _mm256_setzero_pd();
  double total = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vp = _mm256_loadu_pd(p + i);
    __m256d vq = _mm256_loadu_pd(q + i);
    __m256d active = _mm256_cmp_pd(vp, zero, _CMP_GT_OQ);
    // vlog needs normal positive inputs; rare lanes go through libm.
    __m256d bad = _mm256_and_pd(
        active, _mm256_or_pd(_mm256_cmp_pd(vp, tiny, _CMP_LT_OQ),
                             _mm256_cmp_pd(vq, tiny, _CMP_LT_OQ)));
    if (_mm256_movemask_pd(bad) != 0) {
      for (std::size_t j = i; j < i + 4; ++j) {
        if (p[j] > 0.0) total += p[j] * (std::log(p[j]) - std::log(q[j]));
      }
      continue;
    }
    __m256d sp = _mm256_blendv_pd(one, vp, active);
    __m256d sq = _mm256_blendv_pd(one, vq, active);
    __m256d term =
        _mm256_mul_pd(sp, _mm256_sub_pd(vlog(sp), vlog(sq)));
    acc = _mm256_add_pd(acc, term);
  }
  total += hsum(acc);
  for (; i < n; ++i) {
    if (p[i] > 0.0) total += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return total;
}

double xlogx_sum_impl(const double* x, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d tiny = _mm256_set1_pd(DBL_MIN);
  __m256d acc = _mm256_setzero_pd();
  double total = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vx = _mm256_loadu_pd(x + i);
    __m256d active = _mm256_cmp_pd(vx, zero, _CMP_GT_OQ);
    __m256d bad = _mm256_and_pd(active, _mm256_cmp_pd(vx, tiny, _CMP_LT_OQ));
    if (_mm256_movemask_pd(bad) != 0) {
      for (std::size_t j = i; j < i + 4; ++j) {
        if (x[j] > 0.0) total += x[j] * std::log(x[j]);
      }
      continue;
    }
    __m256d sx = _mm256_blendv_pd(one, vx, active);
    acc = _mm256_fmadd_pd(sx, vlog(sx), acc);
  }
  total += hsum(acc);
  for (; i < n; ++i) {
    if (x[i] > 0.0) total += x[i] * std::log(x[i]);
  }
  return total;
}

void centered_moments_impl(const double* x, const double* y, std::size_t n,
                           double mean_x, double mean_y, double out[3]) {
  const __m256d mx = _mm256_set1_pd(mean_x);
  const __m256d my = _mm256_set1_pd(mean_y);
  __m256d sxx = _mm256_setzero_pd();
  __m256d syy = _mm256_setzero_pd();
  __m256d sxy = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(x + i), mx);
    __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(y + i), my);
    sxx = _mm256_fmadd_pd(dx, dx, sxx);
    syy = _mm256_fmadd_pd(dy, dy, syy);
    sxy = _mm256_fmadd_pd(dx, dy, sxy);
  }
  out[0] = hsum(sxx);
  out[1] = hsum(syy);
  out[2] = hsum(sxy);
  for (; i < n; ++i) {
    const double dx = x[i] - mean_x;
    const double dy = y[i] - mean_y;
    out[0] += dx * dx;
    out[1] += dy * dy;
    out[2] += dx * dy;
  }
}

double index_weighted_sum_impl(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  __m256d idx = _mm256_setr_pd(0.0, 1.0, 2.0, 3.0);
  const __m256d step = _mm256_set1_pd(4.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_fmadd_pd(idx, _mm256_loadu_pd(x + i), acc);
    idx = _mm256_add_pd(idx, step);
  }
  double total = hsum(acc);
  for (; i < n; ++i) total += static_cast<double>(i) * x[i];
  return total;
}

void add_gaussian_row_impl(double* row, std::size_t n, double x0,
                           double inv_two_sigma_sq, double amp) {
  const __m256d vx0 = _mm256_set1_pd(x0);
  const __m256d vc = _mm256_set1_pd(-inv_two_sigma_sq);
  const __m256d vamp = _mm256_set1_pd(amp);
  __m256d idx = _mm256_setr_pd(0.0, 1.0, 2.0, 3.0);
  const __m256d step = _mm256_set1_pd(4.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(idx, vx0);
    __m256d e = vexp(_mm256_mul_pd(_mm256_mul_pd(d, d), vc));
    _mm256_storeu_pd(row + i,
                     _mm256_fmadd_pd(vamp, e, _mm256_loadu_pd(row + i)));
    idx = _mm256_add_pd(idx, step);
  }
  for (; i < n; ++i) {
    const double d = static_cast<double>(i) - x0;
    row[i] += amp * std::exp(-d * d * inv_two_sigma_sq);
  }
}

}  // namespace

const Backend& avx2_backend() {
  static const Backend table = {
      "avx2",
      sum_impl,
      dot_impl,
      sum_sq_diff_impl,
      max_value_impl,
      scale_impl,
      axpy_impl,
      mean2_impl,
      exp_shift_sum_impl,
      kl_sum_impl,
      xlogx_sum_impl,
      centered_moments_impl,
      index_weighted_sum_impl,
      add_gaussian_row_impl,
  };
  return table;
}

}  // namespace gazealign::kern

#endif  // GAZEALIGN_BUILD_AVX2
