#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "snmm/grid.hpp"
#include "snmm/simd/kernels.hpp"

namespace snmm {

/// One mixture component: a mean and an SPD covariance.
struct SNComponent {
  Vec2 mu = Vec2::Zero();
  Mat2 sigma = Mat2::Identity();

  SNComponent() = default;
  /// Validates and symmetrizes sigma; throws ParameterError.
  SNComponent(Vec2 mean, Mat2 covariance);

  Mat2 precision() const { return sigma.inverse(); }
  /// Evaluation form of the (unskewed) Gaussian density.
  simd::GaussCoeffs coeffs() const;
};

void validate_component(const SNComponent& c);

/// Mixture weights plus components. With a skewing function this is a
/// skew-normal mixture; on an obstacle-free grid it is an ordinary GMM.
struct MixtureParams {
  std::vector<double> weights;
  std::vector<SNComponent> components;

  std::size_t size() const { return components.size(); }
  /// Weights positive and summing to 1 within 1e-12; throws ParameterError.
  void validate() const;
};

/// Values of a density at every point of a quadrature grid.
class DensityField {
 public:
  DensityField(QuadratureGrid grid, std::vector<double> values);

  const QuadratureGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }
  double integral() const { return grid_.integrate(values_); }
  std::size_t argmax() const;

 private:
  QuadratureGrid grid_;
  std::vector<double> values_;
};

/// Free-space statistics of one component under the grid quadrature.
struct ComponentMoments {
  double normalizer;  // E[Q(X)]
  Vec2 mean;          // E[X Q(X)] / E[Q(X)]
  Mat2 scatter;       // E[(X - mu)(X - mu)^T Q(X)] / E[Q(X)], about the component mean
};

/// Normalizers at or below this count as a fully blocked component.
inline constexpr double kBlockedNormalizer = 1e-6;

double gaussian_pdf(const Vec2& x, const SNComponent& comp);

/// E[Q(X)] by grid quadrature; exactly 1 on an obstacle-free grid.
/// Throws BlockedComponentError when the result is <= kBlockedNormalizer.
double skew_normalizer(const SNComponent& comp, const QuadratureGrid& grid);

/// Normalizer plus first and second free-space moments. On an
/// obstacle-free grid the analytic values (1, mu, sigma) are returned.
ComponentMoments component_moments(const SNComponent& comp, const QuadratureGrid& grid);

/// Skew-normal density phi(x) Q(x) / E[Q]. Zero inside obstacles and outside
/// the workspace.
double brfsn_pdf(const Vec2& x, const SNComponent& comp, const QuadratureGrid& grid);
double snmm_pdf(const Vec2& x, const MixtureParams& params, const QuadratureGrid& grid);

/// Skew-normal density of one component on the grid.
DensityField component_field(const SNComponent& comp, const QuadratureGrid& grid);
/// Mixture density on the grid.
DensityField mixture_field(const MixtureParams& params, const QuadratureGrid& grid);

/// Grid quadrature of p*q. Throws UsageError for mismatched lattices.
double inner_product(const DensityField& p, const DensityField& q);
/// Grid quadrature of (p - q)^2.
double l2_distance_sq(const DensityField& p, const DensityField& q);
/// Cauchy-Schwarz divergence; +infinity when the fields do not overlap.
double cs_divergence(const DensityField& f1, const DensityField& f2);
/// CS divergence from precomputed inner products.
double cs_divergence_from_products(double cross, double self1, double self2);

struct SampleSet {
  std::vector<Vec2> points;
  std::vector<std::size_t> labels;  // generating component per point
};

/// Draws `count` points: component ~ weights, Gaussian draw, accepted only in
/// free space. Deterministic for a given seed. Throws BlockedComponentError
/// after 1e5 consecutive rejections.
SampleSet sample(const MixtureParams& params, const SkewField& field, std::size_t count,
                 std::uint64_t seed);

}  // namespace snmm
