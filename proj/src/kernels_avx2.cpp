// AVX2 + FMA variants of the reduction kernels. Compiled only on x86-64
// with -mavx2 -mfma; selected at runtime (see kernels.cpp).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>

#include <immintrin.h>

namespace prinstrat::kernels::detail {

namespace {

double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

// log for 4 doubles: reduce so 1+f lands in [sqrt(1/2), sqrt(2)), then the
// fdlibm core with s = f/(2+f). Caller guarantees all lanes are finite,
// normal and positive.
__m256d log4(__m256d x) {
  const __m256d kSqrtHalf = _mm256_set1_pd(0.70710678118654752440);
  const __m256d kOne = _mm256_set1_pd(1.0);
  const __m256d kTwo = _mm256_set1_pd(2.0);
  const __m256d kHalf = _mm256_set1_pd(0.5);
  const __m256d kLn2Hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d kLn2Lo = _mm256_set1_pd(1.90821492927058770002e-10);
  const __m256d kLg1 = _mm256_set1_pd(6.666666666666735130e-01);
  const __m256d kLg2 = _mm256_set1_pd(3.999999999940941908e-01);
  const __m256d kLg3 = _mm256_set1_pd(2.857142874366239149e-01);
  const __m256d kLg4 = _mm256_set1_pd(2.222219843214978396e-01);
  const __m256d kLg5 = _mm256_set1_pd(1.818357216161805012e-01);
  const __m256d kLg6 = _mm256_set1_pd(1.531383769920937332e-01);
  const __m256d kLg7 = _mm256_set1_pd(1.479819860511658591e-01);

  const __m256i bits = _mm256_castpd_si256(x);
  // Biased exponent, re-biased so the mantissa lands in [0.5, 1).
  __m256i e64 = _mm256_sub_epi64(_mm256_srli_epi64(bits, 52), _mm256_set1_epi64x(1022));
  const __m256i mant_mask = _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL);
  const __m256i half_exp = _mm256_set1_epi64x(0x3FE0000000000000LL);
  __m256d m = _mm256_castsi256_pd(
      _mm256_or_si256(_mm256_and_si256(bits, mant_mask), half_exp));

  // If m < sqrt(1/2): e -= 1 and m *= 2. The comparison mask is all-ones
  // (-1 as int64) where true.
  const __m256d lt = _mm256_cmp_pd(m, kSqrtHalf, _CMP_LT_OQ);
  e64 = _mm256_add_epi64(e64, _mm256_castpd_si256(lt));
  m = _mm256_add_pd(m, _mm256_and_pd(lt, m));  // m *= 2 where lt

  // Convert the (small) int64 exponents to double via a 32-bit pack.
  const __m256i pack_idx = _mm256_setr_epi32(0, 2, 4, 6, 0, 0, 0, 0);
  const __m128i e32 = _mm256_castsi256_si128(_mm256_permutevar8x32_epi32(e64, pack_idx));
  const __m256d dk = _mm256_cvtepi32_pd(e32);

  const __m256d f = _mm256_sub_pd(m, kOne);
  const __m256d s = _mm256_div_pd(f, _mm256_add_pd(kTwo, f));
  const __m256d z = _mm256_mul_pd(s, s);
  const __m256d w = _mm256_mul_pd(z, z);
  __m256d t1 = _mm256_fmadd_pd(w, kLg6, kLg4);
  t1 = _mm256_fmadd_pd(w, t1, kLg2);
  t1 = _mm256_mul_pd(w, t1);
  __m256d t2 = _mm256_fmadd_pd(w, kLg7, kLg5);
  t2 = _mm256_fmadd_pd(w, t2, kLg3);
  t2 = _mm256_fmadd_pd(w, t2, kLg1);
  t2 = _mm256_mul_pd(z, t2);
  const __m256d r_poly = _mm256_add_pd(t2, t1);
  const __m256d hfsq = _mm256_mul_pd(_mm256_mul_pd(kHalf, f), f);
  // dk*ln2_hi - ((hfsq - (s*(hfsq+R) + dk*ln2_lo)) - f)
  const __m256d corr =
      _mm256_fmadd_pd(s, _mm256_add_pd(hfsq, r_poly), _mm256_mul_pd(dk, kLn2Lo));
  const __m256d inner = _mm256_sub_pd(_mm256_sub_pd(hfsq, corr), f);
  return _mm256_fnmadd_pd(kOne, inner, _mm256_mul_pd(dk, kLn2Hi));
}

}  // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double out = hsum(acc);
  for (; i < n; ++i) out += a[i] * b[i];
  return out;
}

double sum_avx2(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double out = hsum(acc);
  for (; i < n; ++i) out += a[i];
  return out;
}

double sum_sq_avx2(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(a + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double out = hsum(acc);
  for (; i < n; ++i) out += a[i] * a[i];
  return out;
}

double sum_log_affine_avx2(const double* r, std::size_t n, double ca, double cb) {
  const __m256d va = _mm256_set1_pd(ca);
  const __m256d vb = _mm256_set1_pd(cb);
  const __m256d tiny = _mm256_set1_pd(std::numeric_limits<double>::min());
  const __m256d huge = _mm256_set1_pd(std::numeric_limits<double>::max());
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_fmadd_pd(vb, _mm256_loadu_pd(r + i), va);
    // Zero, negative, denormal, inf or NaN lanes take the scalar path.
    const __m256d ok = _mm256_and_pd(_mm256_cmp_pd(v, tiny, _CMP_GE_OQ),
                                     _mm256_cmp_pd(v, huge, _CMP_LE_OQ));
    if (_mm256_movemask_pd(ok) != 0xF) {
      double out = hsum(acc);
      for (; i < n; ++i) out += std::log(ca + cb * r[i]);
      return out;
    }
    acc = _mm256_add_pd(acc, log4(v));
  }
  double out = hsum(acc);
  for (; i < n; ++i) out += std::log(ca + cb * r[i]);
  return out;
}

}  // namespace prinstrat::kernels::detail
