#include <cmath>

#include "snmm/simd/kernels.hpp"

namespace snmm::simd {

namespace {

inline double quad_form(const GaussCoeffs& c, double dx, double dy) {
  return c.pxx * dx * dx + 2.0 * c.pxy * dx * dy + c.pyy * dy * dy;
}

void gaussian_eval(const double* xs, const double* ys, std::size_t n, const GaussCoeffs& c,
                   double* out) {
  for (std::size_t j = 0; j < n; ++j) {
    const double dx = xs[j] - c.mx;
    const double dy = ys[j] - c.my;
    out[j] = std::exp(c.log_norm - 0.5 * quad_form(c, dx, dy));
  }
}

double gaussian_eval_weighted(const double* xs, const double* ys, const double* w, std::size_t n,
                              const GaussCoeffs& c, double* out) {
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double dx = xs[j] - c.mx;
    const double dy = ys[j] - c.my;
    out[j] = w[j] * std::exp(c.log_norm - 0.5 * quad_form(c, dx, dy));
    acc += out[j];
  }
  return acc;
}

void gaussian_accumulate(const double* xs, const double* ys, std::size_t n, const GaussCoeffs& c,
                         double alpha, double* out) {
  for (std::size_t j = 0; j < n; ++j) {
    const double dx = xs[j] - c.mx;
    const double dy = ys[j] - c.my;
    out[j] += alpha * std::exp(c.log_norm - 0.5 * quad_form(c, dx, dy));
  }
}

Moments gaussian_moments(const double* xs, const double* ys, const double* w, std::size_t n,
                         const GaussCoeffs& c) {
  Moments m;
  for (std::size_t j = 0; j < n; ++j) {
    const double dx = xs[j] - c.mx;
    const double dy = ys[j] - c.my;
    const double g = w[j] * std::exp(c.log_norm - 0.5 * quad_form(c, dx, dy));
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
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += a[j] * b[j];
  return acc;
}

double sum(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += a[j];
  return acc;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = a[j] - b[j];
    acc += d * d;
  }
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) y[j] += alpha * x[j];
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{
      Isa::Scalar, gaussian_eval, gaussian_eval_weighted, gaussian_accumulate, gaussian_moments,
      dot,         sum,           squared_distance,       axpy,
  };
  return table;
}

}  // namespace snmm::simd
