// Classical Gaussian-mixture EM. Baseline for the skew-normal learner and
// the source of its initial parameters.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "snmm/learning.hpp"

namespace snmm::learn {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_gaussian(const Vec2& x, const Vec2& mu, const Mat2& precision, double log_det_sigma) {
  const Vec2 d = x - mu;
  return -kLog2Pi - 0.5 * log_det_sigma - 0.5 * d.dot(precision * d);
}

struct EmState {
  MixtureParams params;
  double log_likelihood = -std::numeric_limits<double>::infinity();
};

Mat2 sample_covariance(std::span<const Vec2> data) {
  Vec2 mean = Vec2::Zero();
  for (const auto& x : data) mean += x;
  mean /= static_cast<double>(data.size());
  Mat2 cov = Mat2::Zero();
  for (const auto& x : data) cov += (x - mean) * (x - mean).transpose();
  return cov / static_cast<double>(data.size());
}

// k-means++ seeding followed by one hard-assignment M-step.
MixtureParams seed_parameters(std::span<const Vec2> data, std::size_t k, std::mt19937_64& rng,
                              double floor) {
  const std::size_t n = data.size();
  std::vector<Vec2> centres;
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  centres.push_back(data[first(rng)]);
  std::vector<double> d2(n);
  while (centres.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centres) best = std::min(best, (data[i] - c).squaredNorm());
      d2[i] = best;
      total += best;
    }
    if (!(total > 0.0)) {
      centres.push_back(data[first(rng)]);
      continue;
    }
    std::discrete_distribution<std::size_t> pick(d2.begin(), d2.end());
    centres.push_back(data[pick(rng)]);
  }

  std::vector<std::size_t> assign(n);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if ((data[i] - centres[c]).squaredNorm() < (data[i] - centres[best]).squaredNorm()) best = c;
    }
    assign[i] = best;
    ++counts[best];
  }
  const Mat2 global = floor_covariance(sample_covariance(data), floor);
  MixtureParams params;
  for (std::size_t c = 0; c < k; ++c) {
    Vec2 mean = Vec2::Zero();
    Mat2 cov = Mat2::Zero();
    if (counts[c] >= 2) {
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] == c) mean += data[i];
      }
      mean /= static_cast<double>(counts[c]);
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] == c) cov += (data[i] - mean) * (data[i] - mean).transpose();
      }
      cov /= static_cast<double>(counts[c]);
    } else {
      mean = centres[c];
      cov = global;
    }
    params.weights.push_back(std::max<double>(static_cast<double>(counts[c]), 1.0));
    params.components.push_back(SNComponent(mean, floor_covariance(cov, floor)));
  }
  double total = 0.0;
  for (double w : params.weights) total += w;
  for (double& w : params.weights) w /= total;
  return params;
}

EmState run_em(std::span<const Vec2> data, MixtureParams params, const GmmConfig& cfg) {
  const std::size_t n = data.size();
  const std::size_t k = params.size();
  Eigen::MatrixXd logp(n, k);
  EmState state;
  double prev = -std::numeric_limits<double>::infinity();
  const Mat2 global = floor_covariance(sample_covariance(data), cfg.covariance_floor);

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    // E-step in the log domain.
    for (std::size_t c = 0; c < k; ++c) {
      const Mat2& s = params.components[c].sigma;
      const Mat2 p = s.inverse();
      const double ld = std::log(s.determinant());
      for (std::size_t i = 0; i < n; ++i) {
        logp(i, c) = std::log(params.weights[c]) + log_gaussian(data[i], params.components[c].mu, p, ld);
      }
    }
    double ll = 0.0;
    Eigen::MatrixXd gamma(n, k);
    Eigen::VectorXd row_lse(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double m = logp.row(i).maxCoeff();
      const double lse = m + std::log((logp.row(i).array() - m).exp().sum());
      row_lse(i) = lse;
      gamma.row(i) = (logp.row(i).array() - lse).exp();
      ll += lse;
    }
    state.params = params;
    state.log_likelihood = ll;
    if (std::isfinite(prev) && std::abs(ll - prev) <= cfg.tolerance * std::abs(prev)) break;
    prev = ll;

    // M-step.
    for (std::size_t c = 0; c < k; ++c) {
      const double total = gamma.col(c).sum();
      if (total < 1e-8) {
        // Empty component: restart it on the worst-explained sample.
        Eigen::Index worst = 0;
        row_lse.minCoeff(&worst);
        params.components[c] = SNComponent(data[static_cast<std::size_t>(worst)], global);
        params.weights[c] = 1.0 / static_cast<double>(n);
        continue;
      }
      Vec2 mean = Vec2::Zero();
      for (std::size_t i = 0; i < n; ++i) mean += gamma(i, c) * data[i];
      mean /= total;
      Mat2 cov = Mat2::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        const Vec2 d = data[i] - mean;
        cov += gamma(i, c) * d * d.transpose();
      }
      cov /= total;
      params.weights[c] = total / static_cast<double>(n);
      params.components[c] = SNComponent(mean, floor_covariance(cov, cfg.covariance_floor));
    }
    double wsum = 0.0;
    for (double w : params.weights) wsum += w;
    for (double& w : params.weights) w /= wsum;
  }
  return state;
}

}  // namespace

Mat2 floor_covariance(const Mat2& sigma, double floor) {
  const Mat2 sym = 0.5 * (sigma + sigma.transpose());
  const Eigen::SelfAdjointEigenSolver<Mat2> eig(sym);
  const Vec2 values = eig.eigenvalues();
  if (values.minCoeff() >= floor) return sym;
  const Vec2 clamped = values.cwiseMax(floor);
  Mat2 out = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

MixtureParams fit_gmm(std::span<const Vec2> data, const GmmConfig& config) {
  if (config.n_components == 0) throw ConfigError("GMM needs at least one component");
  if (data.size() < config.n_components) {
    throw ConfigError("GMM needs at least as many samples as components");
  }
  EmState best;
  for (int r = 0; r < std::max(1, config.restarts); ++r) {
    std::mt19937_64 rng(config.seed + static_cast<std::uint64_t>(r) * 7919ULL);
    MixtureParams init = seed_parameters(data, config.n_components, rng, config.covariance_floor);
    EmState state = run_em(data, std::move(init), config);
    if (r == 0 || state.log_likelihood > best.log_likelihood) best = std::move(state);
  }
  return best.params;
}

double gmm_nll(std::span<const Vec2> data, const MixtureParams& params) {
  double total = 0.0;
  std::vector<double> terms(params.size());
  for (const auto& x : data) {
    for (std::size_t c = 0; c < params.size(); ++c) {
      const Mat2& s = params.components[c].sigma;
      terms[c] = std::log(params.weights[c]) +
                 log_gaussian(x, params.components[c].mu, s.inverse(), std::log(s.determinant()));
    }
    const double m = *std::max_element(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - m);
    total -= m + std::log(acc);
  }
  return total;
}

}  // namespace snmm::learn
