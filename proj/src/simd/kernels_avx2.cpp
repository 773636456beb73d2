// AVX2 + FMA variants. This translation unit is the only one compiled with
// -mavx2 -mfma; it is reached exclusively through avx2_kernels() after a CPU
// feature check.

#include <immintrin.h>

#include <cmath>

#include "snmm/simd/kernels.hpp"

namespace snmm::simd {

namespace {

// exp(x) for doubles: x = n*ln2 + r, |r| <= ln2/2, degree-12 Taylor in r,
// then scale by 2^n through the exponent field. Inputs below -708 flush to 0.
inline __m256d exp256(__m256d x) {
  const __m256d lo = _mm256_set1_pd(-708.0);
  const __m256d hi = _mm256_set1_pd(709.0);
  const __m256d underflow = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634074)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-01), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);

  __m256d p = _mm256_set1_pd(1.0 / 479001600.0);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  __m256i e = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(n));
  e = _mm256_slli_epi64(_mm256_add_epi64(e, _mm256_set1_epi64x(1023)), 52);
  const __m256d scaled = _mm256_mul_pd(p, _mm256_castsi256_pd(e));
  return _mm256_andnot_pd(underflow, scaled);
}

inline double hsum(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  return ((lanes[0] + lanes[1]) + lanes[2]) + lanes[3];
}

struct Broadcast {
  __m256d mx, my, pxx, pxy2, pyy, log_norm, minus_half;
  explicit Broadcast(const GaussCoeffs& c)
      : mx(_mm256_set1_pd(c.mx)),
        my(_mm256_set1_pd(c.my)),
        pxx(_mm256_set1_pd(c.pxx)),
        pxy2(_mm256_set1_pd(2.0 * c.pxy)),
        pyy(_mm256_set1_pd(c.pyy)),
        log_norm(_mm256_set1_pd(c.log_norm)),
        minus_half(_mm256_set1_pd(-0.5)) {}
};

// Gaussian at 4 points; also hands back the offsets for moment kernels.
inline __m256d gauss4(const Broadcast& b, const double* xs, const double* ys, __m256d& dx,
                      __m256d& dy) {
  dx = _mm256_sub_pd(_mm256_loadu_pd(xs), b.mx);
  dy = _mm256_sub_pd(_mm256_loadu_pd(ys), b.my);
  __m256d q = _mm256_mul_pd(_mm256_mul_pd(b.pxx, dx), dx);
  q = _mm256_fmadd_pd(_mm256_mul_pd(b.pxy2, dx), dy, q);
  q = _mm256_fmadd_pd(_mm256_mul_pd(b.pyy, dy), dy, q);
  return exp256(_mm256_fmadd_pd(b.minus_half, q, b.log_norm));
}

inline double gauss1(const GaussCoeffs& c, double x, double y) {
  const double dx = x - c.mx;
  const double dy = y - c.my;
  return std::exp(c.log_norm - 0.5 * (c.pxx * dx * dx + 2.0 * c.pxy * dx * dy + c.pyy * dy * dy));
}

void gaussian_eval(const double* xs, const double* ys, std::size_t n, const GaussCoeffs& c,
                   double* out) {
  const Broadcast b(c);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d dx, dy;
    _mm256_storeu_pd(out + j, gauss4(b, xs + j, ys + j, dx, dy));
  }
  for (; j < n; ++j) out[j] = gauss1(c, xs[j], ys[j]);
}

double gaussian_eval_weighted(const double* xs, const double* ys, const double* w, std::size_t n,
                              const GaussCoeffs& c, double* out) {
  const Broadcast b(c);
  __m256d acc = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d dx, dy;
    const __m256d v = _mm256_mul_pd(_mm256_loadu_pd(w + j), gauss4(b, xs + j, ys + j, dx, dy));
    _mm256_storeu_pd(out + j, v);
    acc = _mm256_add_pd(acc, v);
  }
  double total = hsum(acc);
  for (; j < n; ++j) {
    out[j] = w[j] * gauss1(c, xs[j], ys[j]);
    total += out[j];
  }
  return total;
}

void gaussian_accumulate(const double* xs, const double* ys, std::size_t n, const GaussCoeffs& c,
                         double alpha, double* out) {
  const Broadcast b(c);
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d dx, dy;
    const __m256d g = gauss4(b, xs + j, ys + j, dx, dy);
    _mm256_storeu_pd(out + j, _mm256_fmadd_pd(a, g, _mm256_loadu_pd(out + j)));
  }
  for (; j < n; ++j) out[j] += alpha * gauss1(c, xs[j], ys[j]);
}

Moments gaussian_moments(const double* xs, const double* ys, const double* w, std::size_t n,
                         const GaussCoeffs& c) {
  const Broadcast b(c);
  __m256d m0 = _mm256_setzero_pd(), mx = m0, my = m0, mxx = m0, mxy = m0, myy = m0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d dx, dy;
    const __m256d g = _mm256_mul_pd(_mm256_loadu_pd(w + j), gauss4(b, xs + j, ys + j, dx, dy));
    const __m256d gdx = _mm256_mul_pd(g, dx);
    const __m256d gdy = _mm256_mul_pd(g, dy);
    m0 = _mm256_add_pd(m0, g);
    mx = _mm256_add_pd(mx, gdx);
    my = _mm256_add_pd(my, gdy);
    mxx = _mm256_fmadd_pd(gdx, dx, mxx);
    mxy = _mm256_fmadd_pd(gdx, dy, mxy);
    myy = _mm256_fmadd_pd(gdy, dy, myy);
  }
  Moments m{hsum(m0), hsum(mx), hsum(my), hsum(mxx), hsum(mxy), hsum(myy)};
  for (; j < n; ++j) {
    const double dx = xs[j] - c.mx;
    const double dy = ys[j] - c.my;
    const double g = w[j] * gauss1(c, xs[j], ys[j]);
    m.m0 += g;
    m.mx += g * dx;
    m.my += g * dy;
    m.mxx += g * dx * dx;
    m.mxy += g * dx * dy;
    m.myy += g * dy * dy;
  }
  return m;
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = acc0;
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j + 4), _mm256_loadu_pd(b + j + 4), acc1);
  }
  double total = hsum(_mm256_add_pd(acc0, acc1));
  for (; j < n; ++j) total += a[j] * b[j];
  return total;
}

double sum(const double* a, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = acc0;
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + j));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a + j + 4));
  }
  double total = hsum(_mm256_add_pd(acc0, acc1));
  for (; j < n; ++j) total += a[j];
  return total;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = acc0;
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j));
    const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + j + 4), _mm256_loadu_pd(b + j + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  double total = hsum(_mm256_add_pd(acc0, acc1));
  for (; j < n; ++j) {
    const double d = a[j] - b[j];
    total += d * d;
  }
  return total;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    _mm256_storeu_pd(y + j, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j)));
  }
  for (; j < n; ++j) y[j] += alpha * x[j];
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{
      Isa::Avx2, gaussian_eval, gaussian_eval_weighted, gaussian_accumulate, gaussian_moments,
      dot,       sum,           squared_distance,       axpy,
  };
  return table;
}

}  // namespace snmm::simd
