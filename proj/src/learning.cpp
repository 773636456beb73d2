#include "snmm/learning.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace snmm::learn {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Per-sample log of omega_i * f_i(x_n); -inf where the sample sits in an obstacle.
Eigen::MatrixXd log_joint(std::span<const Vec2> data, const MixtureParams& params,
                          const QuadratureGrid& grid) {
  const std::size_t n = data.size();
  const std::size_t k = params.size();
  Eigen::MatrixXd out(n, k);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const SNComponent& comp = params.components[c];
    const Mat2 p = comp.precision();
    const double base = std::log(params.weights[c]) - kLog2Pi -
                        0.5 * std::log(comp.sigma.determinant()) -
                        std::log(skew_normalizer(comp, grid));
    for (std::size_t i = 0; i < n; ++i) {
      if (!grid.field().is_free(data[i])) {
        out(i, c) = neg_inf;
        continue;
      }
      const Vec2 d = data[i] - comp.mu;
      out(i, c) = base - 0.5 * d.dot(p * d);
    }
  }
  return out;
}

double row_logsumexp(const Eigen::MatrixXd& m, Eigen::Index row) {
  const double top = m.row(row).maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((m.row(row).array() - top).exp().sum());
}

// G * [ln 2pi + 0.5 ln det sigma + 0.5 tr(sigma^-1 S(mu)) + ln Z]
double surrogate_value(const WeightedStats& stats, const SNComponent& comp, double normalizer) {
  const Mat2 s = stats.scatter_about(comp.mu);
  return stats.total * (kLog2Pi + 0.5 * std::log(comp.sigma.determinant()) +
                        0.5 * (comp.precision() * s).trace() + std::log(normalizer));
}

}  // namespace

void LearnConfig::validate() const {
  if (n_components == 0) throw ConfigError("n_components must be at least 1");
  if (outer_iterations < 1 || inner_iterations < 1) {
    throw ConfigError("iteration limits must be at least 1");
  }
  if (!(lambda_mu > 0.0) || !(lambda_L > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(grid_dx > 0.0) || !(grid_dy > 0.0)) throw ConfigError("grid spacing must be positive");
  if (weight_floor < 0.0 || weight_floor * static_cast<double>(n_components) >= 1.0) {
    throw ConfigError("weight floor out of range");
  }
  if (!(covariance_floor > 0.0)) throw ConfigError("covariance floor must be positive");
  if (max_backtracks < 0) throw ConfigError("max_backtracks must be non-negative");
}

Mat2 precision_factor(const Mat2& sigma) {
  const Eigen::LLT<Mat2> llt(sigma.inverse());
  if (llt.info() != Eigen::Success) throw ParameterError("covariance is not positive definite");
  Mat2 l = llt.matrixL();
  l(0, 1) = 0.0;
  return l;
}

Mat2 covariance_from_factor(const Mat2& factor) {
  Mat2 l = factor;
  l(0, 1) = 0.0;
  const double det = l(0, 0) * l(1, 1);
  if (!(std::abs(det) > 1e-150) || !l.allFinite()) {
    throw ParameterError("precision factor is singular");
  }
  const Mat2 s = (l * l.transpose()).inverse();
  return 0.5 * (s + s.transpose());
}

NllResult nll(std::span<const Vec2> data, const MixtureParams& params, const QuadratureGrid& grid) {
  const Eigen::MatrixXd lj = log_joint(data, params, grid);
  double total = 0.0;
  for (Eigen::Index i = 0; i < lj.rows(); ++i) {
    const double l = row_logsumexp(lj, i);
    if (!std::isfinite(l)) {
      return {std::numeric_limits<double>::infinity(), static_cast<std::size_t>(i)};
    }
    total -= l;
  }
  return {total, std::nullopt};
}

Responsibilities e_step(std::span<const Vec2> data, const MixtureParams& params,
                        const QuadratureGrid& grid) {
  const Eigen::MatrixXd lj = log_joint(data, params, grid);
  Responsibilities r;
  r.gamma.resize(lj.rows(), lj.cols());
  for (Eigen::Index i = 0; i < lj.rows(); ++i) {
    const double l = row_logsumexp(lj, i);
    if (!std::isfinite(l)) {
      std::ostringstream os;
      os << "every component has zero density at sample " << i;
      throw DomainError(os.str());
    }
    r.gamma.row(i) = (lj.row(i).array() - l).exp();
    r.gamma.row(i) /= r.gamma.row(i).sum();
  }
  return r;
}

std::vector<double> weight_update(const Responsibilities& resp, double floor) {
  const std::size_t k = resp.components();
  std::vector<double> w(k);
  const double n = static_cast<double>(resp.samples());
  for (std::size_t c = 0; c < k; ++c) {
    w[c] = resp.gamma.col(static_cast<Eigen::Index>(c)).sum() / n;
  }
  if (floor > 0.0) {
    double total = 0.0;
    for (double& v : w) {
      v = std::max(v, floor);
      total += v;
    }
    for (double& v : w) v /= total;
  }
  return w;
}

Mat2 WeightedStats::scatter_about(const Vec2& centre) const {
  const Vec2 d = mean - centre;
  return scatter + d * d.transpose();
}

WeightedStats weighted_stats(std::span<const Vec2> data, const Responsibilities& resp,
                             std::size_t component) {
  const auto col = resp.gamma.col(static_cast<Eigen::Index>(component));
  WeightedStats s{0.0, Vec2::Zero(), Mat2::Zero()};
  for (std::size_t n = 0; n < data.size(); ++n) {
    s.total += col(static_cast<Eigen::Index>(n));
    s.mean += col(static_cast<Eigen::Index>(n)) * data[n];
  }
  if (!(s.total > 0.0)) return s;
  s.mean /= s.total;
  for (std::size_t n = 0; n < data.size(); ++n) {
    const Vec2 d = data[n] - s.mean;
    s.scatter += col(static_cast<Eigen::Index>(n)) * d * d.transpose();
  }
  s.scatter /= s.total;
  return s;
}

double surrogate_component(const WeightedStats& stats, const SNComponent& comp,
                           const QuadratureGrid& grid) {
  return surrogate_value(stats, comp, skew_normalizer(comp, grid));
}

double surrogate_component(std::span<const Vec2> data, const Responsibilities& resp,
                           std::size_t component, const SNComponent& comp,
                           const QuadratureGrid& grid) {
  return surrogate_component(weighted_stats(data, resp, component), comp, grid);
}

SurrogateGradient surrogate_gradient(const WeightedStats& stats, const SNComponent& comp,
                                     const ComponentMoments& moments) {
  SurrogateGradient g;
  const Mat2 prec = comp.precision();
  g.mu = stats.total * prec * (moments.mean - stats.mean);
  const Mat2 l = precision_factor(comp.sigma);
  g.factor = -stats.total * (moments.scatter - stats.scatter_about(comp.mu)) * l;
  g.factor(0, 1) = 0.0;
  return g;
}

Vec2 grad_mu(std::size_t component, const Responsibilities& resp, const MixtureParams& params,
             const QuadratureGrid& grid, std::span<const Vec2> data) {
  const SNComponent& comp = params.components.at(component);
  return surrogate_gradient(weighted_stats(data, resp, component), comp,
                            component_moments(comp, grid))
      .mu;
}

Mat2 grad_L(std::size_t component, const Responsibilities& resp, const MixtureParams& params,
            const QuadratureGrid& grid, std::span<const Vec2> data) {
  const SNComponent& comp = params.components.at(component);
  return surrogate_gradient(weighted_stats(data, resp, component), comp,
                            component_moments(comp, grid))
      .factor;
}

FitResult fit_snmm(std::span<const Vec2> data, const LearnConfig& config,
                   const QuadratureGrid& grid) {
  config.validate();
  GmmConfig g;
  g.n_components = config.n_components;
  g.seed = config.seed;
  g.covariance_floor = config.covariance_floor;
  g.restarts = config.gmm_restarts;
  return fit_snmm_from(data, fit_gmm(data, g), config, grid);
}

FitResult fit_snmm_from(std::span<const Vec2> data, const MixtureParams& initial,
                        const LearnConfig& config, const QuadratureGrid& grid) {
  config.validate();
  if (data.size() < initial.size()) throw ConfigError("fewer samples than components");
  for (std::size_t n = 0; n < data.size(); ++n) {
    if (!grid.field().is_free(data[n])) {
      std::ostringstream os;
      os << "sample " << n << " lies outside free space";
      throw DomainError(os.str());
    }
  }

  FitResult result;
  result.params = initial;
  for (auto& c : result.params.components) {
    c = SNComponent(c.mu, floor_covariance(c.sigma, config.covariance_floor));
  }
  result.params.validate();

  const NllResult start = nll(data, result.params, grid);
  double previous = start.value;
  int stalled = 0;

  for (int outer = 0; outer < config.outer_iterations; ++outer) {
    const Responsibilities resp = e_step(data, result.params, grid);
    result.params.weights = weight_update(resp, config.weight_floor);

    for (std::size_t i = 0; i < result.params.size(); ++i) {
      const WeightedStats stats = weighted_stats(data, resp, i);
      if (!(stats.total > 0.0)) continue;
      SNComponent comp = result.params.components[i];
      ComponentMoments moments = component_moments(comp, grid);
      double value = surrogate_value(stats, comp, moments.normalizer);

      for (int inner = 0; inner < config.inner_iterations; ++inner) {
        const SurrogateGradient g = surrogate_gradient(stats, comp, moments);
        if (g.mu.norm() + g.factor.norm() < config.inner_gradient_tolerance) break;
        const Mat2 l = precision_factor(comp.sigma);
        double step = 1.0;
        bool accepted = false;
        for (int bt = 0; bt <= config.max_backtracks; ++bt, step *= 0.5) {
          try {
            const Vec2 mu = comp.mu - step * config.lambda_mu * g.mu;
            const Mat2 sigma = floor_covariance(
                covariance_from_factor(l - step * config.lambda_L * g.factor),
                config.covariance_floor);
            SNComponent cand(mu, sigma);
            ComponentMoments cm = component_moments(cand, grid);
            const double v = surrogate_value(stats, cand, cm.normalizer);
            if (v < value) {
              comp = cand;
              moments = cm;
              value = v;
              accepted = true;
              break;
            }
          } catch (const ParameterError&) {
          } catch (const BlockedComponentError&) {
          }
        }
        if (!accepted) break;
      }
      result.params.components[i] = comp;
    }

    const NllResult current = nll(data, result.params, grid);
    result.outer_iterations = outer + 1;
    if (!std::isfinite(current.value)) {
      result.nll_trace.push_back(current.value);
      throw DivergenceError("negative log-likelihood became non-finite", result.nll_trace);
    }
    if (current.value > previous + config.monotone_tolerance) {
      result.nll_trace.push_back(current.value);
      std::ostringstream os;
      os << "negative log-likelihood rose from " << previous << " to " << current.value
         << " at outer iteration " << outer;
      throw DivergenceError(os.str(), result.nll_trace);
    }
    result.nll_trace.push_back(current.value);
    stalled = (previous - current.value < config.early_stop_tolerance) ? stalled + 1 : 0;
    previous = current.value;
    if (stalled >= config.early_stop_patience) break;
  }
  return result;
}

}  // namespace snmm::learn
