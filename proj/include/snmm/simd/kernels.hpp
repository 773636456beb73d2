#pragma once

// Data-parallel inner loops over quadrature grids. Every kernel has a scalar
// reference implementation; wider variants are selected once at runtime and
// must agree with the reference to rounding (see tests/test_kernels.cpp).

#include <cstddef>
#include <span>
#include <string_view>

namespace snmm::simd {

/// Bivariate Gaussian in evaluation form:
///   g(x, y) = exp(log_norm - 0.5 * [dx dy] P [dx dy]^T),  dx = x - mx, dy = y - my
/// where P = [[pxx, pxy], [pxy, pyy]] is the precision matrix.
struct GaussCoeffs {
  double mx = 0.0, my = 0.0;
  double pxx = 1.0, pxy = 0.0, pyy = 1.0;
  double log_norm = 0.0;
};

/// Weighted raw moments of g about (mx, my): sums of w*g, w*g*dx, w*g*dy,
/// w*g*dx*dx, w*g*dx*dy, w*g*dy*dy. No cell-area factor applied.
struct Moments {
  double m0 = 0.0;
  double mx = 0.0, my = 0.0;
  double mxx = 0.0, mxy = 0.0, myy = 0.0;
};

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  /// out[j] = g(xs[j], ys[j])
  void (*gaussian_eval)(const double* xs, const double* ys, std::size_t n, const GaussCoeffs& c,
                        double* out);
  /// out[j] = w[j] * g(xs[j], ys[j]); returns the sum of out.
  double (*gaussian_eval_weighted)(const double* xs, const double* ys, const double* w,
                                   std::size_t n, const GaussCoeffs& c, double* out);
  /// out[j] += alpha * g(xs[j], ys[j])
  void (*gaussian_accumulate)(const double* xs, const double* ys, std::size_t n,
                              const GaussCoeffs& c, double alpha, double* out);
  Moments (*gaussian_moments)(const double* xs, const double* ys, const double* w, std::size_t n,
                              const GaussCoeffs& c);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  /// y[j] += alpha * x[j]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_kernels();
/// nullptr when the binary or the CPU lacks AVX2+FMA.
const KernelTable* avx2_kernels();

/// Kernels chosen for this process: the widest supported ISA unless the
/// environment variable SNMM_FORCE_SCALAR is set to a non-empty value other than "0".
const KernelTable& active();

// Span conveniences over the active table.
void gaussian_eval(std::span<const double> xs, std::span<const double> ys, const GaussCoeffs& c,
                   std::span<double> out);
double gaussian_eval_weighted(std::span<const double> xs, std::span<const double> ys,
                              std::span<const double> w, const GaussCoeffs& c,
                              std::span<double> out);
void gaussian_accumulate(std::span<const double> xs, std::span<const double> ys,
                         const GaussCoeffs& c, double alpha, std::span<double> out);
Moments gaussian_moments(std::span<const double> xs, std::span<const double> ys,
                         std::span<const double> w, const GaussCoeffs& c);
double dot(std::span<const double> a, std::span<const double> b);
double sum(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace snmm::simd
