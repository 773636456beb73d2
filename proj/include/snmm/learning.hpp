#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "snmm/mixture.hpp"

namespace snmm::learn {

/// Posterior component memberships: one row per sample, one column per
/// component; rows sum to 1.
struct Responsibilities {
  Eigen::MatrixXd gamma;

  std::size_t samples() const { return static_cast<std::size_t>(gamma.rows()); }
  std::size_t components() const { return static_cast<std::size_t>(gamma.cols()); }
};

struct LearnConfig {
  std::size_t n_components = 2;
  int outer_iterations = 100;  // L1
  int inner_iterations = 20;   // L2
  double lambda_mu = 1e-2;
  double lambda_L = 1e-3;
  std::uint64_t seed = 1;
  double grid_dx = 0.1;
  double grid_dy = 0.1;
  double weight_floor = 1e-6;
  double covariance_floor = 1e-4;  // minimum covariance eigenvalue, m^2
  int max_backtracks = 10;
  double early_stop_tolerance = 1e-6;
  int early_stop_patience = 5;
  /// Inner loop stops early once the gradient norm drops below this.
  double inner_gradient_tolerance = 1e-10;
  /// Trace values may rise by at most this much between outer iterations.
  double monotone_tolerance = 1e-3;
  int gmm_restarts = 1;

  void validate() const;
};

struct GmmConfig {
  std::size_t n_components = 2;
  std::uint64_t seed = 1;
  int max_iterations = 500;
  double tolerance = 1e-9;  // relative log-likelihood change
  double covariance_floor = 1e-4;
  int restarts = 1;
};

struct NllResult {
  double value;
  /// First sample with zero density, when value is +infinity.
  std::optional<std::size_t> offending_index;
};

/// Lower-triangular L with positive diagonal and sigma^-1 = L L^T.
Mat2 precision_factor(const Mat2& sigma);
/// sigma = (L L^T)^-1; throws ParameterError when L is singular.
Mat2 covariance_from_factor(const Mat2& factor);

NllResult nll(std::span<const Vec2> data, const MixtureParams& params, const QuadratureGrid& grid);

Responsibilities e_step(std::span<const Vec2> data, const MixtureParams& params,
                        const QuadratureGrid& grid);

/// Column means of gamma, floored at `floor` and renormalized.
std::vector<double> weight_update(const Responsibilities& resp, double floor = 0.0);

/// Responsibility-weighted sufficient statistics of one column.
struct WeightedStats {
  double total;  // sum_n gamma_ni
  Vec2 mean;     // responsibility-weighted sample mean
  Mat2 scatter;  // weighted scatter about `mean`

  /// Weighted scatter about an arbitrary centre.
  Mat2 scatter_about(const Vec2& centre) const;
};

WeightedStats weighted_stats(std::span<const Vec2> data, const Responsibilities& resp,
                             std::size_t component);

/// Component-i part of the EM upper bound for fixed responsibilities:
///   sum_n gamma_ni * [-ln phi(x_n | mu, sigma) + ln E[Q]]
double surrogate_component(const WeightedStats& stats, const SNComponent& comp,
                           const QuadratureGrid& grid);
double surrogate_component(std::span<const Vec2> data, const Responsibilities& resp,
                           std::size_t component, const SNComponent& comp,
                           const QuadratureGrid& grid);

/// Analytic gradient of the surrogate with respect to mu_i.
Vec2 grad_mu(std::size_t component, const Responsibilities& resp, const MixtureParams& params,
             const QuadratureGrid& grid, std::span<const Vec2> data);
/// Analytic gradient with respect to the lower-triangular precision factor L_i
/// (upper entry zeroed).
Mat2 grad_L(std::size_t component, const Responsibilities& resp, const MixtureParams& params,
            const QuadratureGrid& grid, std::span<const Vec2> data);

/// Both gradients from precomputed statistics; the form used inside the fit.
struct SurrogateGradient {
  Vec2 mu;
  Mat2 factor;
};
SurrogateGradient surrogate_gradient(const WeightedStats& stats, const SNComponent& comp,
                                     const ComponentMoments& moments);

struct FitResult {
  MixtureParams params;
  std::vector<double> nll_trace;  // one entry per completed outer iteration
  int outer_iterations = 0;
};

/// Raised when the NLL becomes non-finite or rises beyond the monotone
/// tolerance; carries the trace so far.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

/// Expectation-maximization with gradient M-step for skew-normal mixtures,
/// initialized from fit_gmm with the same component count and seed.
FitResult fit_snmm(std::span<const Vec2> data, const LearnConfig& config, const QuadratureGrid& grid);
/// Same, from explicit starting parameters.
FitResult fit_snmm_from(std::span<const Vec2> data, const MixtureParams& initial,
                        const LearnConfig& config, const QuadratureGrid& grid);

/// Classical Gaussian-mixture EM with k-means++ seeding.
MixtureParams fit_gmm(std::span<const Vec2> data, const GmmConfig& config);
/// Unskewed log-likelihood based negative log-likelihood of a GMM.
double gmm_nll(std::span<const Vec2> data, const MixtureParams& params);

/// Clamp covariance eigenvalues from below.
Mat2 floor_covariance(const Mat2& sigma, double floor);

}  // namespace snmm::learn
