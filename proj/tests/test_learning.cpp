#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "snmm/learning.hpp"

using namespace snmm;
using namespace snmm::learn;

namespace {

Mat2 mat(double xx, double xy, double yy) {
  Mat2 m;
  m << xx, xy, xy, yy;
  return m;
}

SkewField exp_a_field() {
  return SkewField(Workspace(0, 20, 0, 20), {Obstacle::rectangle(10, 5, 12, 14)});
}

MixtureParams exp_a_truth() {
  return {{0.5, 0.5},
          {SNComponent({9, 12}, mat(1.0, 0.3, 0.7)), SNComponent({9, 7}, mat(1.0, -0.3, 0.7))}};
}

std::vector<Vec2> gaussian_cloud(const Vec2& mu, const Mat2& sigma, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const Mat2 l = sigma.llt().matrixL();
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(mu + l * Vec2(z(rng), z(rng)));
  return out;
}

// Independent log-density of one skew-normal component: Q / Z evaluated by
// a direct loop over the grid rather than the SIMD kernels.
double direct_log_density(const Vec2& x, const SNComponent& c, const QuadratureGrid& g) {
  const Mat2 p = c.sigma.inverse();
  auto log_phi = [&](const Vec2& y) {
    const Vec2 d = y - c.mu;
    return -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(c.sigma.determinant()) - 0.5 * d.dot(p * d);
  };
  double z = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (g.q()[j] > 0.0) z += std::exp(log_phi(g.point(j)));
  }
  z *= g.cell_area();
  return log_phi(x) - std::log(z);
}

Responsibilities random_resp(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Responsibilities r;
  r.gamma.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < r.gamma.rows(); ++i) {
    for (Eigen::Index c = 0; c < r.gamma.cols(); ++c) r.gamma(i, c) = u(rng);
    r.gamma.row(i) /= r.gamma.row(i).sum();
  }
  return r;
}

}  // namespace

TEST_CASE("precision factor round trip") {
  const Mat2 s = mat(1.0, 0.3, 0.7);
  const Mat2 l = precision_factor(s);
  CHECK(l(0, 1) == 0.0);
  CHECK(l(0, 0) > 0.0);
  CHECK(l(1, 1) > 0.0);
  CHECK((l * l.transpose() - s.inverse()).norm() < 1e-12);
  CHECK((covariance_from_factor(l) - s).norm() < 1e-12);
  CHECK_THROWS_AS(covariance_from_factor(Mat2::Zero()), ParameterError);
}

TEST_CASE("nll of a single sample at the mode") {
  const QuadratureGrid g(SkewField(Workspace(0, 20, 0, 20), {}), 0.1, 0.1);
  const Mat2 s = mat(1.0, 0.3, 0.7);
  const MixtureParams p{{1.0}, {SNComponent({9, 12}, s)}};
  const std::vector<Vec2> x{Vec2(9, 12)};
  CHECK(nll(x, p, g).value ==
        doctest::Approx(-std::log(1.0 / (2.0 * std::numbers::pi * std::sqrt(s.determinant())))).epsilon(1e-12));
}

TEST_CASE("nll properties on the rectangle scene") {
  const QuadratureGrid g(exp_a_field(), 0.1, 0.1);
  const MixtureParams truth = exp_a_truth();
  const SampleSet s = sample(truth, g.field(), 300, 1);
  MixtureParams shifted = truth;
  for (auto& c : shifted.components) c.mu += Vec2(2, 2);
  const double base = nll(s.points, truth, g).value;
  CHECK(base < nll(s.points, shifted, g).value);

  std::vector<Vec2> doubled = s.points;
  doubled.insert(doubled.end(), s.points.begin(), s.points.end());
  CHECK(nll(doubled, truth, g).value == doctest::Approx(2.0 * base).epsilon(1e-12));

  const std::vector<Vec2> bad{Vec2(9, 12), Vec2(11, 9)};
  const NllResult r = nll(bad, truth, g);
  CHECK(std::isinf(r.value));
  CHECK(r.offending_index.value() == 1);
}

TEST_CASE("e-step") {
  const QuadratureGrid g(exp_a_field(), 0.1, 0.1);
  SUBCASE("single component") {
    const MixtureParams one{{1.0}, {SNComponent({9, 12}, Mat2::Identity())}};
    const std::vector<Vec2> x{Vec2(1, 1), Vec2(9, 12), Vec2(15, 3)};
    const Responsibilities r = e_step(x, one, g);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(r.gamma(i, 0) == doctest::Approx(1.0));
  }
  SUBCASE("symmetric components and an equidistant sample") {
    const QuadratureGrid free_grid(SkewField(Workspace(0, 20, 0, 20), {}), 0.1, 0.1);
    const MixtureParams sym{{0.5, 0.5}, {SNComponent({8, 10}, Mat2::Identity()), SNComponent({12, 10}, Mat2::Identity())}};
    const std::vector<Vec2> x{Vec2(10, 13)};
    const Responsibilities r = e_step(x, sym, free_grid);
    CHECK(r.gamma(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.gamma(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("matches an independent evaluation") {
    const MixtureParams truth = exp_a_truth();
    const SampleSet s = sample(truth, g.field(), 10, 77);
    const Responsibilities r = e_step(s.points, truth, g);
    for (std::size_t n = 0; n < s.points.size(); ++n) {
      double joint[2];
      for (std::size_t c = 0; c < 2; ++c) {
        joint[c] = truth.weights[c] * std::exp(direct_log_density(s.points[n], truth.components[c], g));
      }
      const double total = joint[0] + joint[1];
      for (std::size_t c = 0; c < 2; ++c) {
        CHECK(std::abs(r.gamma(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) - joint[c] / total) < 1e-8);
      }
    }
  }
  SUBCASE("sample with zero density everywhere is an error") {
    const std::vector<Vec2> x{Vec2(11, 9)};
    CHECK_THROWS_AS(e_step(x, exp_a_truth(), g), DomainError);
  }
}

TEST_CASE("weight update") {
  Responsibilities r;
  r.gamma = Eigen::MatrixXd::Zero(4, 2);
  r.gamma.col(0).setOnes();
  auto w = weight_update(r);
  CHECK(w[0] == 1.0);
  CHECK(w[1] == 0.0);
  w = weight_update(r, 1e-6);
  CHECK(w[1] > 0.0);
  CHECK(w[0] + w[1] == doctest::Approx(1.0).epsilon(1e-15));

  r.gamma.setConstant(0.5);
  w = weight_update(r);
  CHECK(w[0] == doctest::Approx(0.5));

  const Responsibilities rnd = random_resp(37, 3, 9);
  w = weight_update(rnd);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (Eigen::Index i = 0; i < 37; ++i) mean += rnd.gamma(i, static_cast<Eigen::Index>(c));
    CHECK(std::abs(w[c] - mean / 37.0) < 1e-12);
  }
}

TEST_CASE("gradients vanish at the Gaussian maximum-likelihood point") {
  const QuadratureGrid g(SkewField(Workspace(0, 20, 0, 20), {}), 0.1, 0.1);
  const std::vector<Vec2> x = gaussian_cloud({10, 10}, mat(1.0, 0.2, 0.6), 200, 3);
  Responsibilities r;
  r.gamma = Eigen::MatrixXd::Ones(200, 1);
  const WeightedStats st = weighted_stats(x, r, 0);
  const MixtureParams p{{1.0}, {SNComponent(st.mean, st.scatter)}};
  CHECK(grad_mu(0, r, p, g, x).norm() < 1e-6);
  CHECK(grad_L(0, r, p, g, x).norm() < 1e-5);
}

TEST_CASE("analytic gradients agree with finite differences of the surrogate") {
  const QuadratureGrid g(exp_a_field(), 0.1, 0.1);
  const MixtureParams truth = exp_a_truth();
  const SampleSet s = sample(truth, g.field(), 300, 4);
  const Responsibilities r = e_step(s.points, truth, g);
  const WeightedStats st = weighted_stats(s.points, r, 0);
  const SNComponent c({9.6, 11.2}, mat(1.4, 0.2, 0.9));
  const Mat2 l = precision_factor(c.sigma);
  const double h = 1e-4;

  const Vec2 gm = grad_mu(0, r, {{1.0}, {c}}, g, s.points);
  for (int k = 0; k < 2; ++k) {
    Vec2 e = Vec2::Zero();
    e[k] = h;
    const double fd = (surrogate_component(st, SNComponent(c.mu + e, c.sigma), g) -
                       surrogate_component(st, SNComponent(c.mu - e, c.sigma), g)) / (2 * h);
    CHECK(std::abs(fd - gm[k]) / std::max(1.0, std::abs(fd)) < 1e-5);
  }
  const Mat2 gl = grad_L(0, r, {{1.0}, {c}}, g, s.points);
  CHECK(gl(0, 1) == 0.0);
  for (auto [i, j] : {std::pair{0, 0}, std::pair{1, 0}, std::pair{1, 1}}) {
    Mat2 e = Mat2::Zero();
    e(i, j) = h;
    const double fd = (surrogate_component(st, SNComponent(c.mu, covariance_from_factor(l + e)), g) -
                       surrogate_component(st, SNComponent(c.mu, covariance_from_factor(l - e)), g)) / (2 * h);
    CHECK(std::abs(fd - gl(i, j)) / std::max(1.0, std::abs(fd)) < 1e-5);
  }
}

TEST_CASE("gradients scale linearly with the responsibility column") {
  const QuadratureGrid g(exp_a_field(), 0.1, 0.1);
  const MixtureParams truth = exp_a_truth();
  const SampleSet s = sample(truth, g.field(), 100, 6);
  Responsibilities r = e_step(s.points, truth, g);
  const Vec2 m1 = grad_mu(1, r, truth, g, s.points);
  const Mat2 l1 = grad_L(1, r, truth, g, s.points);
  r.gamma.col(1) *= 2.5;
  CHECK((grad_mu(1, r, truth, g, s.points) - 2.5 * m1).norm() < 1e-9 * std::max(1.0, m1.norm()));
  CHECK((grad_L(1, r, truth, g, s.points) - 2.5 * l1).norm() < 1e-9 * std::max(1.0, l1.norm()));
}

TEST_CASE("gradient of a blocked component is an error") {
  const QuadratureGrid g(SkewField(Workspace(0, 20, 0, 20), {Obstacle::rectangle(5, 5, 15, 15)}), 0.1, 0.1);
  const std::vector<Vec2> x{Vec2(2, 2), Vec2(3, 2)};
  Responsibilities r;
  r.gamma = Eigen::MatrixXd::Ones(2, 1);
  const MixtureParams p{{1.0}, {SNComponent({10, 10}, 0.05 * Mat2::Identity())}};
  CHECK_THROWS_AS(grad_mu(0, r, p, g, x), BlockedComponentError);
}

TEST_CASE("fit recovers the Gaussian MLE when nothing is blocked") {
  const QuadratureGrid g(SkewField(Workspace(0, 20, 0, 20), {}), 0.1, 0.1);
  const std::vector<Vec2> x = gaussian_cloud({10, 9}, mat(1.2, -0.3, 0.8), 400, 12);
  LearnConfig cfg;
  cfg.n_components = 1;
  cfg.outer_iterations = 5;
  cfg.inner_iterations = 3000;
  const FitResult fit = fit_snmm(x, cfg, g);
  Responsibilities r;
  r.gamma = Eigen::MatrixXd::Ones(400, 1);
  const WeightedStats st = weighted_stats(x, r, 0);
  CHECK((fit.params.components[0].mu - st.mean).norm() < 1e-3);
  CHECK((fit.params.components[0].sigma - st.scatter).norm() < 1e-3);
}

TEST_CASE("one outer iteration without obstacles reproduces a classical EM update") {
  const QuadratureGrid g(SkewField(Workspace(0, 20, 0, 20), {}), 0.1, 0.1);
  std::vector<Vec2> x = gaussian_cloud({7, 10}, mat(1.0, 0.2, 0.7), 150, 1);
  const auto b = gaussian_cloud({13, 9}, mat(0.8, -0.1, 1.1), 150, 2);
  x.insert(x.end(), b.begin(), b.end());
  const MixtureParams start{{0.4, 0.6},
                            {SNComponent({6, 9}, mat(1.5, 0.0, 1.5)), SNComponent({12, 11}, mat(2.0, 0.5, 1.0))}};

  // Classical EM step computed directly.
  Eigen::MatrixXd gamma(300, 2);
  for (std::size_t n = 0; n < 300; ++n) {
    double row[2];
    for (std::size_t c = 0; c < 2; ++c) row[c] = start.weights[c] * gaussian_pdf(x[n], start.components[c]);
    for (std::size_t c = 0; c < 2; ++c) gamma(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) = row[c] / (row[0] + row[1]);
  }
  LearnConfig cfg;
  cfg.outer_iterations = 1;
  cfg.inner_iterations = 20000;
  cfg.weight_floor = 0.0;
  const FitResult fit = fit_snmm_from(x, start, cfg, g);
  for (Eigen::Index c = 0; c < 2; ++c) {
    const double nk = gamma.col(c).sum();
    Vec2 mu = Vec2::Zero();
    for (std::size_t n = 0; n < 300; ++n) mu += gamma(static_cast<Eigen::Index>(n), c) * x[n];
    mu /= nk;
    Mat2 s = Mat2::Zero();
    for (std::size_t n = 0; n < 300; ++n) s += gamma(static_cast<Eigen::Index>(n), c) * (x[n] - mu) * (x[n] - mu).transpose();
    s /= nk;
    const auto& fc = fit.params.components[static_cast<std::size_t>(c)];
    CHECK(std::abs(fit.params.weights[static_cast<std::size_t>(c)] - nk / 300.0) < 1e-4);
    CHECK((fc.mu - mu).cwiseAbs().maxCoeff() < 1e-4);
    CHECK((fc.sigma - s).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("fit on the rectangle scene decreases the NLL") {
  const QuadratureGrid g(exp_a_field(), 0.1, 0.1);
  const SampleSet s = sample(exp_a_truth(), g.field(), 300, 1);
  LearnConfig cfg;
  cfg.outer_iterations = 15;
  const FitResult fit = fit_snmm(s.points, cfg, g);
  REQUIRE(fit.nll_trace.size() >= 2);
  CHECK(fit.nll_trace.size() == static_cast<std::size_t>(fit.outer_iterations));
  for (std::size_t k = 1; k < fit.nll_trace.size(); ++k) {
    CHECK(fit.nll_trace[k] <= fit.nll_trace[k - 1] + cfg.monotone_tolerance);
  }
  GmmConfig gc;
  const MixtureParams gmm = fit_gmm(s.points, gc);
  CHECK(fit.nll_trace.back() < gmm_nll(s.points, gmm));
}

TEST_CASE("fit rejects invalid input") {
  const QuadratureGrid g(exp_a_field(), 0.1, 0.1);
  LearnConfig cfg;
  const std::vector<Vec2> inside{Vec2(11, 9), Vec2(3, 3), Vec2(4, 4)};
  CHECK_THROWS_AS(fit_snmm_from(inside, exp_a_truth(), cfg, g), DomainError);
  cfg.n_components = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = LearnConfig{};
  cfg.lambda_mu = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("gmm fit") {
  SUBCASE("single component gives the sample moments") {
    const std::vector<Vec2> x = gaussian_cloud({3, 4}, mat(0.5, 0.1, 0.9), 250, 8);
    GmmConfig c;
    c.n_components = 1;
    const MixtureParams p = fit_gmm(x, c);
    Responsibilities r;
    r.gamma = Eigen::MatrixXd::Ones(250, 1);
    const WeightedStats st = weighted_stats(x, r, 0);
    CHECK((p.components[0].mu - st.mean).norm() < 1e-12);
    CHECK((p.components[0].sigma - st.scatter).norm() < 1e-12);
  }
  SUBCASE("two separated clusters") {
    std::vector<Vec2> x = gaussian_cloud({2, 2}, 0.3 * Mat2::Identity(), 200, 1);
    const auto b = gaussian_cloud({12, 8}, 0.3 * Mat2::Identity(), 200, 2);
    x.insert(x.end(), b.begin(), b.end());
    GmmConfig c;
    const MixtureParams p = fit_gmm(x, c);
    const Vec2 m0 = p.components[0].mu, m1 = p.components[1].mu;
    const double err = std::min(std::max((m0 - Vec2(2, 2)).norm(), (m1 - Vec2(12, 8)).norm()),
                                std::max((m1 - Vec2(2, 2)).norm(), (m0 - Vec2(12, 8)).norm()));
    CHECK(err < 0.1);
  }
  SUBCASE("more components never hurt in-sample") {
    const QuadratureGrid g(exp_a_field(), 0.1, 0.1);
    const SampleSet s = sample(exp_a_truth(), g.field(), 300, 1);
    GmmConfig c1, c2;
    c1.n_components = 1;
    c2.restarts = 3;
    CHECK(gmm_nll(s.points, fit_gmm(s.points, c2)) <= gmm_nll(s.points, fit_gmm(s.points, c1)));
  }
}

TEST_CASE("covariance floor clamps eigenvalues") {
  const Mat2 s = floor_covariance(mat(1.0, 0.0, 1e-8), 1e-4);
  CHECK(s(1, 1) == doctest::Approx(1e-4));
  CHECK(s(0, 0) == doctest::Approx(1.0));
  const Mat2 untouched = floor_covariance(mat(1.0, 0.3, 0.7), 1e-4);
  CHECK((untouched - mat(1.0, 0.3, 0.7)).norm() < 1e-12);
}
