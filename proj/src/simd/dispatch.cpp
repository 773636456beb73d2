#include <cstdlib>
#include <string>

#include "snmm/simd/kernels.hpp"

namespace snmm::simd {

#if defined(SNMM_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable* avx2_kernels() {
#if defined(SNMM_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable& chosen = [&]() -> const KernelTable& {
    const char* force = std::getenv("SNMM_FORCE_SCALAR");
    if (force != nullptr && std::string(force) != "" && std::string(force) != "0") {
      return scalar_kernels();
    }
    if (const KernelTable* wide = avx2_kernels()) return *wide;
    return scalar_kernels();
  }();
  return chosen;
}

void gaussian_eval(std::span<const double> xs, std::span<const double> ys, const GaussCoeffs& c,
                   std::span<double> out) {
  active().gaussian_eval(xs.data(), ys.data(), xs.size(), c, out.data());
}

double gaussian_eval_weighted(std::span<const double> xs, std::span<const double> ys,
                              std::span<const double> w, const GaussCoeffs& c,
                              std::span<double> out) {
  return active().gaussian_eval_weighted(xs.data(), ys.data(), w.data(), xs.size(), c, out.data());
}

void gaussian_accumulate(std::span<const double> xs, std::span<const double> ys,
                         const GaussCoeffs& c, double alpha, std::span<double> out) {
  active().gaussian_accumulate(xs.data(), ys.data(), xs.size(), c, alpha, out.data());
}

Moments gaussian_moments(std::span<const double> xs, std::span<const double> ys,
                         std::span<const double> w, const GaussCoeffs& c) {
  return active().gaussian_moments(xs.data(), ys.data(), w.data(), xs.size(), c);
}

double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

double sum(std::span<const double> a) { return active().sum(a.data(), a.size()); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace snmm::simd
