#include "snmm/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace snmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)

void require_same_lattice(const DensityField& p, const DensityField& q) {
  if (!p.grid().same_lattice(q.grid())) {
    throw UsageError("density fields live on different quadrature grids");
  }
}

}  // namespace

SNComponent::SNComponent(Vec2 mean, Mat2 covariance) : mu(std::move(mean)), sigma(covariance) {
  validate_component(*this);
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
}

void validate_component(const SNComponent& c) {
  if (!c.mu.allFinite() || !c.sigma.allFinite()) {
    throw ParameterError("component parameters must be finite");
  }
  if (std::abs(c.sigma(0, 1) - c.sigma(1, 0)) > 1e-12) {
    throw ParameterError("covariance must be symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Mat2> eig(c.sigma);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) {
    throw ParameterError("covariance must be positive definite");
  }
}

simd::GaussCoeffs SNComponent::coeffs() const {
  const Mat2 p = precision();
  simd::GaussCoeffs c;
  c.mx = mu.x();
  c.my = mu.y();
  c.pxx = p(0, 0);
  c.pxy = 0.5 * (p(0, 1) + p(1, 0));
  c.pyy = p(1, 1);
  c.log_norm = -kLog2Pi - 0.5 * std::log(sigma.determinant());
  return c;
}

void MixtureParams::validate() const {
  if (components.empty()) throw ParameterError("mixture needs at least one component");
  if (weights.size() != components.size()) {
    throw ParameterError("mixture weight count does not match component count");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw ParameterError("mixture weights must be strictly positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ParameterError("mixture weights must sum to 1");
  for (const auto& c : components) validate_component(c);
}

DensityField::DensityField(QuadratureGrid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size()) throw UsageError("density field size does not match grid");
}

std::size_t DensityField::argmax() const {
  return static_cast<std::size_t>(std::max_element(values_.begin(), values_.end()) -
                                  values_.begin());
}

double gaussian_pdf(const Vec2& x, const SNComponent& comp) {
  const simd::GaussCoeffs c = comp.coeffs();
  const double dx = x.x() - c.mx;
  const double dy = x.y() - c.my;
  return std::exp(c.log_norm - 0.5 * (c.pxx * dx * dx + 2.0 * c.pxy * dx * dy + c.pyy * dy * dy));
}

ComponentMoments component_moments(const SNComponent& comp, const QuadratureGrid& grid) {
  if (grid.all_free()) return {1.0, comp.mu, comp.sigma};
  const simd::Moments m = simd::gaussian_moments(grid.xs(), grid.ys(), grid.q(), comp.coeffs());
  const double z = m.m0 * grid.cell_area();
  if (!(z > kBlockedNormalizer)) {
    std::ostringstream os;
    os << "component with mean (" << comp.mu.x() << ", " << comp.mu.y()
       << ") is fully blocked (normalizer " << z << ")";
    throw BlockedComponentError(os.str());
  }
  grid.normalizer_cache().store(comp.mu, comp.sigma, z);
  ComponentMoments out;
  out.normalizer = z;
  out.mean = comp.mu + Vec2(m.mx, m.my) / m.m0;
  out.scatter << m.mxx / m.m0, m.mxy / m.m0, m.mxy / m.m0, m.myy / m.m0;
  return out;
}

double skew_normalizer(const SNComponent& comp, const QuadratureGrid& grid) {
  if (grid.all_free()) return 1.0;
  if (auto hit = grid.normalizer_cache().find(comp.mu, comp.sigma)) return *hit;
  return component_moments(comp, grid).normalizer;
}

double brfsn_pdf(const Vec2& x, const SNComponent& comp, const QuadratureGrid& grid) {
  const double z = skew_normalizer(comp, grid);
  if (!grid.field().is_free(x)) return 0.0;
  return gaussian_pdf(x, comp) / z;
}

double snmm_pdf(const Vec2& x, const MixtureParams& params, const QuadratureGrid& grid) {
  double total = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    total += params.weights[i] * brfsn_pdf(x, params.components[i], grid);
  }
  return total;
}

DensityField component_field(const SNComponent& comp, const QuadratureGrid& grid) {
  std::vector<double> values(grid.size());
  if (grid.all_free()) {
    simd::gaussian_eval(grid.xs(), grid.ys(), comp.coeffs(), values);
    return DensityField(grid, std::move(values));
  }
  const double mass =
      simd::gaussian_eval_weighted(grid.xs(), grid.ys(), grid.q(), comp.coeffs(), values);
  const double z = mass * grid.cell_area();
  if (!(z > kBlockedNormalizer)) {
    throw BlockedComponentError("component is fully blocked on this grid");
  }
  grid.normalizer_cache().store(comp.mu, comp.sigma, z);
  const double inv = 1.0 / z;
  for (double& v : values) v *= inv;
  return DensityField(grid, std::move(values));
}

DensityField mixture_field(const MixtureParams& params, const QuadratureGrid& grid) {
  std::vector<double> values(grid.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const DensityField f = component_field(params.components[i], grid);
    simd::axpy(params.weights[i], f.values(), values);
  }
  return DensityField(grid, std::move(values));
}

double inner_product(const DensityField& p, const DensityField& q) {
  require_same_lattice(p, q);
  return simd::dot(p.values(), q.values()) * p.grid().cell_area();
}

double l2_distance_sq(const DensityField& p, const DensityField& q) {
  require_same_lattice(p, q);
  return simd::squared_distance(p.values(), q.values()) * p.grid().cell_area();
}

double cs_divergence_from_products(double cross, double self1, double self2) {
  if (!(cross > 0.0)) return std::numeric_limits<double>::infinity();
  const double d = -std::log(cross) + 0.5 * (std::log(self1) + std::log(self2));
  // Cauchy-Schwarz guarantees d >= 0; clip rounding noise around equality.
  return d < 0.0 && d > -1e-12 ? 0.0 : d;
}

double cs_divergence(const DensityField& f1, const DensityField& f2) {
  const double cross = inner_product(f1, f2);
  const double self1 = inner_product(f1, f1);
  const double self2 = inner_product(f2, f2);
  if (!(self1 > 0.0) || !(self2 > 0.0)) {
    throw UsageError("CS divergence needs fields with positive self-energy");
  }
  return cs_divergence_from_products(cross, self1, self2);
}

SampleSet sample(const MixtureParams& params, const SkewField& field, std::size_t count,
                 std::uint64_t seed) {
  params.validate();
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(params.weights.begin(), params.weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Mat2> factors;
  for (const auto& c : params.components) factors.push_back(c.sigma.llt().matrixL());

  SampleSet out;
  out.points.reserve(count);
  out.labels.reserve(count);
  std::size_t rejections = 0;
  while (out.points.size() < count) {
    const std::size_t i = pick(rng);
    const double z0 = normal(rng);
    const double z1 = normal(rng);
    const Vec2 x = params.components[i].mu + factors[i] * Vec2(z0, z1);
    if (field.is_free(x)) {
      out.points.push_back(x);
      out.labels.push_back(i);
      rejections = 0;
    } else if (++rejections > 100000) {
      throw BlockedComponentError("sampling rejected 1e5 consecutive draws; component blocked");
    }
  }
  return out;
}

}  // namespace snmm
