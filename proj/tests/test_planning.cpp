#include <doctest.h>

#include <cmath>
#include <numbers>

#include "snmm/planning.hpp"

using namespace snmm;
using namespace snmm::plan;

namespace {

Mat2 mat(double xx, double xy, double yy) {
  Mat2 m;
  m << xx, xy, xy, yy;
  return m;
}

double normal_at(const Vec2& d, const Mat2& s) {
  return std::exp(-0.5 * d.dot(s.inverse() * d)) / (2.0 * std::numbers::pi * std::sqrt(s.determinant()));
}

double self_product(const Mat2& s) { return 1.0 / (4.0 * std::numbers::pi * std::sqrt(s.determinant())); }

// Closed-form potentials for one Gaussian against a Gaussian goal.
double closed_sn(const SNComponent& p, const SNComponent& g) {
  const double d = self_product(p.sigma) + self_product(g.sigma) - 2.0 * normal_at(p.mu - g.mu, p.sigma + g.sigma);
  return 0.5 * std::log(d);
}

double closed_cs(const SNComponent& p, const SNComponent& g) {
  return -std::log(normal_at(p.mu - g.mu, p.sigma + g.sigma)) + 0.5 * std::log(self_product(p.sigma)) +
         0.5 * std::log(self_product(g.sigma));
}

QuadratureGrid free_grid() { return QuadratureGrid(SkewField(Workspace(0, 20, 0, 20), {}), 0.1, 0.1); }

GoalSpec goal() { return {SNComponent({14, 11}, mat(1.2, 0.2, 0.8))}; }

}  // namespace

TEST_CASE("planner names") {
  CHECK(parse_planner("di") == Planner::Di);
  CHECK(parse_planner("snmm-di") == Planner::Di);
  CHECK(parse_planner("snmm-apf") == Planner::SnmmApf);
  CHECK(parse_planner("gmm-apf") == Planner::GmmApf);
  CHECK_THROWS_AS(parse_planner("rrt"), ConfigError);
  for (Planner p : {Planner::Di, Planner::SnmmApf, Planner::GmmApf}) CHECK(parse_planner(planner_name(p)) == p);
}

TEST_CASE("parameter packing round trip") {
  const SNComponent c({3, 4}, mat(1.3, -0.4, 0.9));
  const ComponentTheta th = pack(c);
  CHECK(th[0] == 3.0);
  CHECK(th[1] == 4.0);
  const SNComponent back = unpack(th);
  CHECK((back.mu - c.mu).norm() == 0.0);
  CHECK((back.sigma - c.sigma).norm() < 1e-12);
}

TEST_CASE("DI covariance path") {
  const Mat2 s0 = mat(2.0, 0.5, 1.0), sf = mat(0.5, -0.1, 1.5);
  CHECK((di_covariance(s0, sf, 0.0) - s0).norm() < 1e-12);
  CHECK((di_covariance(s0, sf, 1.0) - sf).norm() < 1e-12);
  // Commuting covariances follow the scalar geodesic per axis.
  const Mat2 a = mat(4.0, 0.0, 1.0), b = mat(1.0, 0.0, 9.0);
  for (double s : {0.1, 0.37, 0.5, 0.9}) {
    const Mat2 c = di_covariance(a, b, s);
    CHECK(c(0, 0) == doctest::Approx(std::pow((1 - s) * 2.0 + s * 1.0, 2)).epsilon(1e-12));
    CHECK(c(1, 1) == doctest::Approx(std::pow((1 - s) * 1.0 + s * 3.0, 2)).epsilon(1e-12));
    CHECK(std::abs(c(0, 1)) < 1e-12);
  }
  CHECK_THROWS_AS(di_covariance(mat(1, 0, -1), sf, 0.5), ParameterError);
}

TEST_CASE("DI trajectory endpoints and time grid") {
  const MixtureParams init{{0.3, 0.7}, {SNComponent({3, 3}, mat(1, 0, 1)), SNComponent({4, 15}, mat(0.5, 0.1, 0.8))}};
  const PlanTrajectory t = plan_di(init, goal(), 200);
  REQUIRE(t.frames.size() == 201);
  CHECK(t.success);
  CHECK(t.steps == 200);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK((t.frames.front().params.components[i].mu - init.components[i].mu).norm() == 0.0);
    CHECK((t.frames.back().params.components[i].mu - goal().component.mu).norm() < 1e-12);
    CHECK((t.frames.back().params.components[i].sigma - goal().component.sigma).norm() < 1e-12);
    CHECK(t.frames[100].params.components[i].mu.isApprox(0.5 * (init.components[i].mu + goal().component.mu)));
  }
  for (std::size_t k = 0; k < t.frames.size(); ++k) {
    CHECK(t.frames[k].s == doctest::Approx(k / 200.0));
    CHECK(t.frames[k].params.weights == init.weights);
  }
  CHECK_THROWS_AS(plan_di(init, goal(), 0), ConfigError);
}

TEST_CASE("DI mean path is symmetric under time reversal") {
  const SNComponent a({3, 4}, mat(1, 0.2, 0.6)), b({15, 12}, mat(0.7, -0.1, 1.3));
  const PlanTrajectory fwd = plan_di({{1.0}, {a}}, {b}, 40);
  const PlanTrajectory back = plan_di({{1.0}, {b}}, {a}, 40);
  for (std::size_t k = 0; k <= 40; ++k) {
    const Vec2 d = fwd.frames[k].params.components[0].mu - back.frames[40 - k].params.components[0].mu;
    CHECK(d.cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("SN potential") {
  const QuadratureGrid g = free_grid();
  const MixtureParams at{{1.0}, {goal().component}};
  CHECK(std::isinf(potential_sn(at, goal(), g)));
  CHECK(potential_sn(at, goal(), g) < 0);
  double prev = -std::numeric_limits<double>::infinity();
  for (double shift : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const MixtureParams p{{1.0}, {SNComponent(goal().component.mu - Vec2(shift, 0), goal().component.sigma)}};
    const double u = potential_sn(p, goal(), g);
    CHECK(u > prev);
    CHECK(u == doctest::Approx(closed_sn(p.components[0], goal().component)).epsilon(1e-6));
    prev = u;
  }
}

TEST_CASE("CS potential matches the Gaussian closed form") {
  const QuadratureGrid g = free_grid();
  const SNComponent a({9, 8}, mat(1.0, 0.3, 0.7)), b({11, 10}, mat(0.6, -0.1, 1.4));
  const MixtureParams p{{0.25, 0.75}, {a, b}};
  const double expected = 0.25 * closed_cs(a, goal().component) + 0.75 * closed_cs(b, goal().component);
  CHECK(potential_cs(p, goal(), g) == doctest::Approx(expected).epsilon(1e-6));
  CHECK(std::abs(potential_cs({{1.0}, {goal().component}}, goal(), g)) < 1e-9);
}

TEST_CASE("repulsive potential") {
  const MixtureParams p{{1.0}, {SNComponent({10, 10}, mat(0.2, 0, 0.2))}};
  CHECK(repulsive_potential(p, free_grid()) == 0.0);

  const QuadratureGrid walled(SkewField(Workspace(0, 20, 0, 20), {Obstacle::rectangle(6, 6, 14, 14)}), 0.1, 0.1);
  CHECK(repulsive_potential(p, walled) == doctest::Approx(1.0).epsilon(1e-6));

  // Fine-grid oracle for a Gaussian straddling the rectangle edge.
  const QuadratureGrid scene(SkewField(Workspace(0, 20, 0, 20), {Obstacle::rectangle(10, 5, 12, 14)}), 0.1, 0.1);
  const SNComponent c({9.4, 9.0}, mat(1.0, 0.3, 0.7));
  double oracle = 0.0;
  const double h = 0.005;
  for (double x = 10 + h / 2; x < 12; x += h) {
    for (double y = 5 + h / 2; y < 14; y += h) oracle += normal_at(Vec2(x, y) - c.mu, c.sigma) * h * h;
  }
  CHECK(repulsive_potential({{1.0}, {c}}, scene) == doctest::Approx(oracle).epsilon(1e-2));
}

TEST_CASE("repulsion enters the objective only in GMM mode and above the threshold") {
  const QuadratureGrid scene(SkewField(Workspace(0, 20, 0, 20), {Obstacle::rectangle(10, 5, 12, 14)}), 0.1, 0.1);
  ApfConfig cfg;
  cfg.gamma_rep = 2.0;
  cfg.eta = 0.05;
  const MixtureParams far{{1.0}, {SNComponent({3, 3}, mat(0.5, 0, 0.5))}};
  const MixtureParams near{{1.0}, {SNComponent({9.4, 9.0}, mat(1.0, 0.3, 0.7))}};

  ApfObjective gmm(goal(), scene, cfg, ApfMode::Gmm);
  gmm.set_state(far);
  auto t = gmm.terms();
  CHECK(t.rep < cfg.eta);
  CHECK(t.rep_term == 0.0);
  CHECK(t.total == doctest::Approx(t.sn + t.cs));

  gmm.set_state(near);
  t = gmm.terms();
  CHECK(t.rep == doctest::Approx(repulsive_potential(near, scene)).epsilon(1e-9));
  REQUIRE(t.rep > cfg.eta);
  CHECK(t.rep_term == doctest::Approx(2.0 * std::log(t.rep)));
  CHECK(t.total == doctest::Approx(t.sn + t.cs + t.rep_term));
  // GMM mode evaluates its densities as plain Gaussians.
  CHECK(gmm.eval_grid().all_free());
  CHECK(t.sn == doctest::Approx(closed_sn(near.components[0], goal().component)).epsilon(1e-5));

  ApfObjective sn(goal(), scene, cfg, ApfMode::Snmm);
  sn.set_state(near);
  t = sn.terms();
  CHECK(t.rep == 0.0);
  CHECK(t.rep_term == 0.0);
  CHECK(t.sn == doctest::Approx(potential_sn(near, goal(), scene)).epsilon(1e-9));
  CHECK(t.cs == doctest::Approx(potential_cs(near, goal(), scene)).epsilon(1e-9));
}

TEST_CASE("objective gradient agrees with the closed-form potential") {
  const QuadratureGrid g = free_grid();
  ApfConfig cfg;
  ApfObjective obj(goal(), g, cfg, ApfMode::Snmm);
  const SNComponent c({10.5, 9.0}, mat(1.1, -0.2, 0.9));
  obj.set_state({{1.0}, {c}});
  const auto grad = obj.gradient(1e-4);
  const ComponentTheta base = pack(c);
  auto closed_total = [&](const ComponentTheta& th) {
    const SNComponent x = unpack(th);
    return closed_sn(x, goal().component) + closed_cs(x, goal().component);
  };
  for (std::size_t k = 0; k < 5; ++k) {
    ComponentTheta plus = base, minus = base;
    plus[k] += 1e-5;
    minus[k] -= 1e-5;
    const double oracle = (closed_total(plus) - closed_total(minus)) / 2e-5;
    CAPTURE(k);
    CHECK(std::abs(grad[0][k] - oracle) < 1e-4 * std::max(1.0, std::abs(oracle)));
  }
}

TEST_CASE("success threshold follows the goal self energy") {
  const QuadratureGrid g = free_grid();
  ApfConfig cfg;
  ApfObjective obj(goal(), g, cfg, ApfMode::Snmm);
  CHECK(obj.success_threshold() ==
        doctest::Approx(0.5 * std::log(0.01 * self_product(goal().component.sigma))).epsilon(1e-8));
}

TEST_CASE("APF started at the goal finishes immediately") {
  const QuadratureGrid g = free_grid();
  const PlanTrajectory t = plan_apf({{1.0}, {goal().component}}, goal(), g, ApfConfig{}, ApfMode::Snmm);
  CHECK(t.success);
  CHECK(t.steps <= 1);
  CHECK(t.frames.size() == static_cast<std::size_t>(t.steps) + 1);
}

TEST_CASE("APF descent is monotone and respects the step caps") {
  const QuadratureGrid scene(SkewField(Workspace(0, 20, 0, 20), {Obstacle::rectangle(10, 5, 12, 14)}), 0.1, 0.1);
  const MixtureParams init{{0.5, 0.5}, {SNComponent({4, 12}, mat(1, 0.3, 0.7)), SNComponent({4, 7}, mat(1, -0.3, 0.7))}};
  ApfConfig cfg;
  cfg.max_steps = 150;
  for (ApfMode mode : {ApfMode::Snmm, ApfMode::Gmm}) {
    const PlanTrajectory t = plan_apf(init, goal(), scene, cfg, mode);
    CHECK(t.gaussian_frames == (mode == ApfMode::Gmm));
    CHECK(t.frames.size() == t.potential.size());
    CHECK(t.frames.size() == static_cast<std::size_t>(t.steps) + 1);
    CHECK(t.frames.front().s == 0.0);
    CHECK(t.frames.back().s == 1.0);
    for (std::size_t k = 1; k < t.potential.size(); ++k) {
      CHECK(t.potential[k] <= t.potential[k - 1]);
      for (std::size_t i = 0; i < 2; ++i) {
        const auto& a = t.frames[k - 1].params.components[i];
        const auto& b = t.frames[k].params.components[i];
        CHECK((b.mu - a.mu).norm() <= cfg.max_mean_step + 1e-12);
      }
    }
    CHECK(t.potential.back() < t.potential.front());
  }
}

TEST_CASE("APF configuration validation") {
  ApfConfig cfg;
  cfg.gamma_sn = 0;
  cfg.gamma_cs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ApfConfig{};
  cfg.eta = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ApfConfig{};
  cfg.max_factor_step = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  const QuadratureGrid blocked(SkewField(Workspace(0, 20, 0, 20), {Obstacle::rectangle(5, 5, 15, 15)}), 0.1, 0.1);
  const GoalSpec buried{SNComponent({10, 10}, mat(0.1, 0, 0.1))};
  CHECK_THROWS_AS(buried.validate(blocked), ConfigError);
}
