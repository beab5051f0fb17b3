// AVX2+FMA backend. This translation unit is the only one compiled with
// -mavx2 -mfma; it must not be entered unless avx2_available() is true.

#include <cmath>
#include <cstddef>
#include <cstdint>

#include "sbmsel/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace sbmsel::kernels {
namespace {

constexpr double kLn2Hi = 6.93145751953125e-1;  // 21 high bits of ln 2
constexpr double kLn2Lo = 1.42860682030941723212e-6;
constexpr double kLog2E = 1.4426950408889634;
constexpr double kSqrt2 = 1.4142135623730951;

// exp underflows to 0 below this and overflows to inf above; both bounds stay
// inside the normal double range so the two-step 2^n scaling never denormals.
constexpr double kExpLo = -708.396418532264;
constexpr double kExpHi = 709.782712893384;

inline __m256d fma(__m256d a, __m256d b, __m256d c) {
  return _mm256_fmadd_pd(a, b, c);
}

// Interprets 64-bit integers in [0, 2^52) as doubles via the 2^52 bias trick.
inline __m256d u52_to_pd(__m256i v) {
  const __m256d bias = _mm256_set1_pd(0x1p52);
  return _mm256_sub_pd(
      _mm256_castsi256_pd(_mm256_or_si256(v, _mm256_castpd_si256(bias))),
      bias);
}

// log of 4 doubles. Range-reduces to m in [sqrt(1/2), sqrt(2)), evaluates
// 2*atanh((m-1)/(m+1)) as an odd polynomial, and recombines the exponent with
// a split ln 2. Matches std::log to a few ulp; +-0, negatives, inf, and NaN
// follow std::log conventions.
inline __m256d vlog4(__m256d x) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();

  // Lift subnormals so exponent extraction below is valid.
  const __m256d tiny_lim = _mm256_set1_pd(0x1p-1022);
  __m256d is_tiny = _mm256_cmp_pd(x, tiny_lim, _CMP_LT_OQ);
  is_tiny = _mm256_andnot_pd(_mm256_cmp_pd(x, zero, _CMP_LE_OQ), is_tiny);
  __m256d xs =
      _mm256_blendv_pd(x, _mm256_mul_pd(x, _mm256_set1_pd(0x1p54)), is_tiny);

  __m256i bits = _mm256_castpd_si256(xs);
  __m256i expo =
      _mm256_and_si256(_mm256_srli_epi64(bits, 52), _mm256_set1_epi64x(0x7ff));
  __m256i mant = _mm256_or_si256(
      _mm256_and_si256(bits, _mm256_set1_epi64x(0x000fffffffffffffLL)),
      _mm256_set1_epi64x(0x3ff0000000000000LL));
  __m256d m = _mm256_castsi256_pd(mant);  // in [1, 2)

  __m256d e = _mm256_sub_pd(u52_to_pd(expo), _mm256_set1_pd(1023.0));
  e = _mm256_add_pd(e, _mm256_and_pd(is_tiny, _mm256_set1_pd(-54.0)));

  __m256d halve = _mm256_cmp_pd(m, _mm256_set1_pd(kSqrt2), _CMP_GE_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), halve);
  e = _mm256_add_pd(e, _mm256_and_pd(halve, one));

  __m256d t = _mm256_div_pd(_mm256_sub_pd(m, one), _mm256_add_pd(m, one));
  __m256d t2 = _mm256_mul_pd(t, t);
  // 2*atanh(t) = t * sum_j (2/(2j+1)) t^(2j), |t| <= 3 - 2*sqrt(2)
  __m256d p = _mm256_set1_pd(2.0 / 19.0);
  p = fma(p, t2, _mm256_set1_pd(2.0 / 17.0));
  p = fma(p, t2, _mm256_set1_pd(2.0 / 15.0));
  p = fma(p, t2, _mm256_set1_pd(2.0 / 13.0));
  p = fma(p, t2, _mm256_set1_pd(2.0 / 11.0));
  p = fma(p, t2, _mm256_set1_pd(2.0 / 9.0));
  p = fma(p, t2, _mm256_set1_pd(2.0 / 7.0));
  p = fma(p, t2, _mm256_set1_pd(2.0 / 5.0));
  p = fma(p, t2, _mm256_set1_pd(2.0 / 3.0));
  p = fma(p, t2, _mm256_set1_pd(2.0));
  __m256d logm = _mm256_mul_pd(t, p);

  __m256d r = fma(e, _mm256_set1_pd(kLn2Hi),
                  fma(e, _mm256_set1_pd(kLn2Lo), logm));

  // Special cases, NaN propagation last.
  const __m256d minus_inf = _mm256_set1_pd(-HUGE_VAL);
  const __m256d plus_inf = _mm256_set1_pd(HUGE_VAL);
  const __m256d qnan = _mm256_set1_pd(__builtin_nan(""));
  r = _mm256_blendv_pd(r, minus_inf, _mm256_cmp_pd(x, zero, _CMP_EQ_OQ));
  r = _mm256_blendv_pd(r, qnan, _mm256_cmp_pd(x, zero, _CMP_LT_OQ));
  r = _mm256_blendv_pd(r, plus_inf, _mm256_cmp_pd(x, plus_inf, _CMP_EQ_OQ));
  r = _mm256_blendv_pd(r, x, _mm256_cmp_pd(x, x, _CMP_UNORD_Q));
  return r;
}

// exp of 4 doubles: r = x - n ln 2 with |r| <= ln(2)/2, degree-13 Taylor for
// e^r, then scales by 2^n in two halves so extreme n never over/underflows
// the intermediate.
inline __m256d vexp4(__m256d x) {
  __m256d nf = _mm256_round_pd(
      _mm256_mul_pd(x, _mm256_set1_pd(kLog2E)),
      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(nf, _mm256_set1_pd(kLn2Hi), x);
  r = _mm256_fnmadd_pd(nf, _mm256_set1_pd(kLn2Lo), r);

  __m256d p = _mm256_set1_pd(1.6059043836821613e-10);  // 1/13!
  p = fma(p, r, _mm256_set1_pd(2.08767569878681e-9));
  p = fma(p, r, _mm256_set1_pd(2.505210838544172e-8));
  p = fma(p, r, _mm256_set1_pd(2.755731922398589e-7));
  p = fma(p, r, _mm256_set1_pd(2.7557319223985893e-6));
  p = fma(p, r, _mm256_set1_pd(2.48015873015873e-5));
  p = fma(p, r, _mm256_set1_pd(1.984126984126984e-4));
  p = fma(p, r, _mm256_set1_pd(1.388888888888889e-3));
  p = fma(p, r, _mm256_set1_pd(8.333333333333333e-3));
  p = fma(p, r, _mm256_set1_pd(4.1666666666666664e-2));
  p = fma(p, r, _mm256_set1_pd(1.6666666666666666e-1));
  p = fma(p, r, _mm256_set1_pd(0.5));
  p = fma(p, r, _mm256_set1_pd(1.0));
  p = fma(p, r, _mm256_set1_pd(1.0));

  __m128i n32 = _mm256_cvtpd_epi32(nf);
  __m128i n1_32 = _mm_srai_epi32(n32, 1);
  __m128i n2_32 = _mm_sub_epi32(n32, n1_32);
  const __m256i bias = _mm256_set1_epi64x(1023);
  __m256d s1 = _mm256_castsi256_pd(_mm256_slli_epi64(
      _mm256_add_epi64(_mm256_cvtepi32_epi64(n1_32), bias), 52));
  __m256d s2 = _mm256_castsi256_pd(_mm256_slli_epi64(
      _mm256_add_epi64(_mm256_cvtepi32_epi64(n2_32), bias), 52));
  __m256d res = _mm256_mul_pd(_mm256_mul_pd(p, s1), s2);

  const __m256d zero = _mm256_setzero_pd();
  const __m256d plus_inf = _mm256_set1_pd(HUGE_VAL);
  res = _mm256_blendv_pd(res, zero,
                         _mm256_cmp_pd(x, _mm256_set1_pd(kExpLo), _CMP_LT_OQ));
  res = _mm256_blendv_pd(res, plus_inf,
                         _mm256_cmp_pd(x, _mm256_set1_pd(kExpHi), _CMP_GT_OQ));
  res = _mm256_blendv_pd(res, x, _mm256_cmp_pd(x, x, _CMP_UNORD_Q));
  return res;
}

// Per-lane Kahan accumulator; lanes are combined once at the end.
struct Kahan4 {
  __m256d sum = _mm256_setzero_pd();
  __m256d comp = _mm256_setzero_pd();
  void add(__m256d x) {
    __m256d y = _mm256_sub_pd(x, comp);
    __m256d t = _mm256_add_pd(sum, y);
    comp = _mm256_sub_pd(_mm256_sub_pd(t, sum), y);
    sum = t;
  }
  double total() const {
    alignas(32) double s[4], c[4];
    _mm256_store_pd(s, sum);
    _mm256_store_pd(c, comp);
    double acc = 0.0, comp_s = 0.0;
    for (int i = 0; i < 4; ++i) {
      double y = (s[i] - c[i]) - comp_s;
      double t = acc + y;
      comp_s = (t - acc) - y;
      acc = t;
    }
    return acc;
  }
};

void vlog_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, vlog4(_mm256_loadu_pd(x + i)));
  }
  if (i < n) {
    alignas(32) double buf[4] = {1.0, 1.0, 1.0, 1.0};
    for (std::size_t j = i; j < n; ++j) buf[j - i] = x[j];
    alignas(32) double res[4];
    _mm256_store_pd(res, vlog4(_mm256_load_pd(buf)));
    for (std::size_t j = i; j < n; ++j) out[j] = res[j - i];
  }
}

void vexp_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, vexp4(_mm256_loadu_pd(x + i)));
  }
  if (i < n) {
    alignas(32) double buf[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t j = i; j < n; ++j) buf[j - i] = x[j];
    alignas(32) double res[4];
    _mm256_store_pd(res, vexp4(_mm256_load_pd(buf)));
    for (std::size_t j = i; j < n; ++j) out[j] = res[j - i];
  }
}

double sum_avx2(const double* x, std::size_t n) {
  Kahan4 acc;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc.add(_mm256_loadu_pd(x + i));
  double total = acc.total();
  for (; i < n; ++i) total += x[i];
  return total;
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  Kahan4 acc;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc.add(_mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  double total = acc.total();
  for (; i < n; ++i) total += x[i] * y[i];
  return total;
}

double sum_log_avx2(const double* x, std::size_t n) {
  Kahan4 acc;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc.add(vlog4(_mm256_loadu_pd(x + i)));
  double total = acc.total();
  for (; i < n; ++i) total += std::log(x[i]);
  return total;
}

double sum_x_log_x_avx2(const double* x, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  Kahan4 acc;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    __m256d pos = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    // log argument forced to 1 on zero lanes so 0*log(0) contributes 0
    __m256d safe = _mm256_blendv_pd(one, v, pos);
    acc.add(_mm256_mul_pd(v, vlog4(safe)));
  }
  double total = acc.total();
  for (; i < n; ++i) {
    if (x[i] > 0.0) total += x[i] * std::log(x[i]);
  }
  return total;
}

double sum_log_mix2_avx2(const double* m, std::size_t n, const double* coeff) {
  const __m256d c0 = _mm256_set1_pd(coeff[0]);
  const __m256d c1 = _mm256_set1_pd(coeff[1]);
  Kahan4 acc;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d lo = _mm256_loadu_pd(m + 2 * i);      // a0 b0 a1 b1
    __m256d hi = _mm256_loadu_pd(m + 2 * i + 4);  // a2 b2 a3 b3
    // unpack keeps (a, b) pairs aligned lane-wise; order within the vector is
    // permuted, which a sum does not care about
    __m256d a = _mm256_unpacklo_pd(lo, hi);
    __m256d b = _mm256_unpackhi_pd(lo, hi);
    acc.add(vlog4(fma(c1, b, _mm256_mul_pd(c0, a))));
  }
  double total = acc.total();
  for (; i < n; ++i) {
    total += std::log(coeff[0] * m[2 * i] + coeff[1] * m[2 * i + 1]);
  }
  return total;
}

double sum_log_mix_avx2(const double* m, std::size_t n, const double* coeff,
                        std::size_t k) {
  if (k == 2) return sum_log_mix2_avx2(m, n, coeff);
  // generic k: mix rows into a chunk buffer, then vector-log the chunk
  constexpr std::size_t kChunk = 256;
  alignas(32) double mix[kChunk];
  Kahan4 acc;
  double tail = 0.0;
  for (std::size_t base = 0; base < n; base += kChunk) {
    std::size_t cnt = n - base < kChunk ? n - base : kChunk;
    for (std::size_t i = 0; i < cnt; ++i) {
      const double* row = m + (base + i) * k;
      double v = 0.0;
      for (std::size_t s = 0; s < k; ++s) v += coeff[s] * row[s];
      mix[i] = v;
    }
    std::size_t i = 0;
    for (; i + 4 <= cnt; i += 4) acc.add(vlog4(_mm256_load_pd(mix + i)));
    for (; i < cnt; ++i) tail += std::log(mix[i]);
  }
  return acc.total() + tail;
}

}  // namespace

const Backend& avx2_backend() {
  static const Backend backend = {
      "avx2",           vlog_avx2,        vexp_avx2,
      sum_avx2,         dot_avx2,         sum_log_avx2,
      sum_x_log_x_avx2, sum_log_mix_avx2,
  };
  return backend;
}

}  // namespace sbmsel::kernels

#endif  // __AVX2__ && __FMA__
