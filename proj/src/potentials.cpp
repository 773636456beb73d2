#include <cmath>
#include <limits>

#include "snmm/learning.hpp"
#include "snmm/planning.hpp"
#include "snmm/simd/kernels.hpp"

namespace snmm::plan {

namespace {

DensityField goal_field(const GoalSpec& goal, const QuadratureGrid& grid) {
  return component_field(goal.component, grid);
}

}  // namespace

double potential_sn(const MixtureParams& params, const GoalSpec& goal, const QuadratureGrid& grid) {
  const double d = l2_distance_sq(mixture_field(params, grid), goal_field(goal, grid));
  return d > 0.0 ? 0.5 * std::log(d) : -std::numeric_limits<double>::infinity();
}

double potential_cs(const MixtureParams& params, const GoalSpec& goal, const QuadratureGrid& grid) {
  const DensityField g = goal_field(goal, grid);
  double total = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    total += params.weights[i] * cs_divergence(component_field(params.components[i], grid), g);
  }
  return total;
}

double repulsive_potential(const MixtureParams& params, const QuadratureGrid& grid) {
  if (grid.all_free()) return 0.0;
  std::vector<double> phi(grid.size());
  double total = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    simd::gaussian_eval(grid.xs(), grid.ys(), params.components[i].coeffs(), phi);
    total += params.weights[i] * simd::dot(phi, grid.blocked()) * grid.cell_area();
  }
  return total;
}

ComponentTheta pack(const SNComponent& c) {
  const Mat2 l = learn::precision_factor(c.sigma);
  return {c.mu.x(), c.mu.y(), l(0, 0), l(1, 0), l(1, 1)};
}

SNComponent unpack(const ComponentTheta& t) {
  Mat2 l;
  l << t[2], 0.0, t[3], t[4];
  return SNComponent(Vec2(t[0], t[1]), learn::covariance_from_factor(l));
}

ApfObjective::ApfObjective(const GoalSpec& goal, const QuadratureGrid& grid, const ApfConfig& cfg,
                           ApfMode mode)
    : cfg_(cfg),
      mode_(mode),
      grid_(grid),
      eval_grid_(mode == ApfMode::Gmm && !grid.all_free() ? grid.free_space_twin() : grid) {
  cfg_.validate();
  goal_field_ = field_of(goal.component);
  goal_self_ = simd::dot(goal_field_, goal_field_) * eval_grid_.cell_area();
}

std::vector<double> ApfObjective::field_of(const SNComponent& c) const {
  DensityField f = component_field(c, eval_grid_);
  return std::move(f.mutable_values());
}

void ApfObjective::set_state(const MixtureParams& params) {
  params.validate();
  const std::size_t k = params.size();
  std::vector<std::vector<double>> fields;
  fields.reserve(k);
  for (const auto& c : params.components) fields.push_back(field_of(c));
  const double da = eval_grid_.cell_area();
  Eigen::MatrixXd gram(k, k);
  std::vector<double> cross(k), rep(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      gram(i, j) = gram(j, i) = simd::dot(fields[i], fields[j]) * da;
    }
    cross[i] = simd::dot(fields[i], goal_field_) * da;
    if (mode_ == ApfMode::Gmm && !grid_.all_free()) {
      rep[i] = simd::dot(fields[i], grid_.blocked()) * da;
    }
  }
  params_ = params;
  fields_ = std::move(fields);
  gram_ = std::move(gram);
  cross_ = std::move(cross);
  rep_ = std::move(rep);
}

ApfObjective::Terms ApfObjective::combine(const Eigen::MatrixXd& gram,
                                          const std::vector<double>& cross,
                                          const std::vector<double>& rep) const {
  const auto& w = params_.weights;
  const std::size_t k = w.size();
  Terms t;
  double d = goal_self_;
  for (std::size_t i = 0; i < k; ++i) {
    d -= 2.0 * w[i] * cross[i];
    for (std::size_t j = 0; j < k; ++j) d += w[i] * w[j] * gram(i, j);
    t.cs += w[i] * cs_divergence_from_products(cross[i], gram(i, i), goal_self_);
    t.rep += w[i] * rep[i];
  }
  t.sn = d > 0.0 ? 0.5 * std::log(d) : -std::numeric_limits<double>::infinity();
  if (mode_ == ApfMode::Gmm && t.rep > cfg_.eta) {
    t.rep_term = cfg_.gamma_rep * std::log(t.rep);
  }
  t.total = cfg_.gamma_sn * t.sn + cfg_.gamma_cs * t.cs + t.rep_term;
  return t;
}

ApfObjective::Terms ApfObjective::terms() const { return combine(gram_, cross_, rep_); }

ApfObjective::Terms ApfObjective::terms_with(std::size_t i, const SNComponent& comp) const {
  const std::vector<double> f = field_of(comp);
  const double da = eval_grid_.cell_area();
  Eigen::MatrixXd gram = gram_;
  std::vector<double> cross = cross_;
  std::vector<double> rep = rep_;
  for (std::size_t j = 0; j < fields_.size(); ++j) {
    const double v = j == i ? simd::dot(f, f) * da : simd::dot(f, fields_[j]) * da;
    gram(i, j) = gram(j, i) = v;
  }
  cross[i] = simd::dot(f, goal_field_) * da;
  if (mode_ == ApfMode::Gmm && !grid_.all_free()) rep[i] = simd::dot(f, grid_.blocked()) * da;
  return combine(gram, cross, rep);
}

std::vector<ComponentTheta> ApfObjective::gradient(double h) const {
  std::vector<ComponentTheta> out(params_.size());
  auto total_at = [&](std::size_t i, const ComponentTheta& theta) {
    try {
      return terms_with(i, unpack(theta)).total;
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const ComponentTheta base = pack(params_.components[i]);
    for (std::size_t k = 0; k < base.size(); ++k) {
      ComponentTheta plus = base, minus = base;
      plus[k] += h;
      minus[k] -= h;
      const double g = (total_at(i, plus) - total_at(i, minus)) / (2.0 * h);
      out[i][k] = std::isfinite(g) ? g : 0.0;
    }
  }
  return out;
}

double ApfObjective::success_threshold() const {
  return 0.5 * std::log(cfg_.success_fraction * goal_self_);
}

}  // namespace snmm::plan
