#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "snmm/swarm.hpp"

using namespace snmm;
using namespace snmm::swarm;

namespace {

QuadratureGrid free_grid() { return QuadratureGrid(SkewField(Workspace(0, 20, 0, 20), {}), 0.1, 0.1); }

std::vector<Vec2> scatter(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(u(rng), u(rng));
  return out;
}

}  // namespace

TEST_CASE("rule-of-thumb bandwidth") {
  CHECK(rule_of_thumb_bandwidth(Mat2::Identity(), 64) == doctest::Approx(0.5));
  CHECK(rule_of_thumb_bandwidth(4.0 * Mat2::Identity(), 1) == doctest::Approx(2.0));
  CHECK_THROWS_AS(rule_of_thumb_bandwidth(Mat2::Identity(), 0), ConfigError);
}

TEST_CASE("KDE integrates to one and matches a direct sum") {
  const QuadratureGrid g = free_grid();
  const std::vector<Vec2> pts = scatter(40, 6, 14, 5);
  const double h = 0.4;
  const DensityField f = kde(pts, h, g);
  CHECK(f.integral() == doctest::Approx(1.0).epsilon(1e-6));
  for (std::size_t j : {std::size_t{0}, std::size_t{20100}, std::size_t{23456}}) {
    const Vec2 y = g.point(j);
    double direct = 0.0;
    for (const auto& p : pts) direct += std::exp(-0.5 * (y - p).squaredNorm() / (h * h)) / (2 * std::numbers::pi * h * h);
    direct /= 40.0;
    CHECK(std::abs(f.values()[j] - direct) < 1e-10);
  }
  CHECK_THROWS_AS(kde({}, h, g), UsageError);
  CHECK_THROWS_AS(kde(pts, 0.0, g), ConfigError);
}

TEST_CASE("KDE kernels keep unit mass at the workspace edge") {
  const QuadratureGrid g = free_grid();
  const std::vector<Vec2> corner{Vec2(0.05, 0.1), Vec2(19.9, 10), Vec2(0, 20)};
  for (double h : {0.2, 0.5, 1.0}) {
    CAPTURE(h);
    CHECK(kde(corner, h, g).integral() == doctest::Approx(1.0).epsilon(1e-2));
  }
}

TEST_CASE("attractive force is the negative gradient of the attractive potential") {
  const QuadratureGrid g = free_grid();
  std::vector<Vec2> pts = scatter(12, 7, 13, 8);
  // Two agents close to the boundary exercise the kernel-mass correction.
  pts[5] = Vec2(0.3, 10.2);
  pts[11] = Vec2(19.6, 19.8);
  const double h = 0.6, radius = 100.0;
  const DensityField target = component_field(SNComponent({11, 10}, Mat2::Identity()), g);
  const DensityField est = kde(pts, h, g, radius);
  for (std::size_t n : {std::size_t{0}, std::size_t{5}, std::size_t{11}}) {
    const Vec2 f = attractive_force(n, pts, h, est, target, radius);
    Vec2 fd;
    for (int k = 0; k < 2; ++k) {
      std::vector<Vec2> plus = pts, minus = pts;
      plus[n][k] += 1e-5;
      minus[n][k] -= 1e-5;
      fd[k] = -(attractive_potential(plus, h, target, radius) - attractive_potential(minus, h, target, radius)) / 2e-5;
    }
    CHECK((f - fd).norm() < 1e-4 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("avoidance force between two agents") {
  const SkewField field(Workspace(0, 20, 0, 20), {});
  const double rho0 = 0.2;
  const std::vector<Vec2> pair{Vec2(10, 10), Vec2(10.1, 10)};
  const Vec2 f0 = avoidance_force(0, pair, field, rho0);
  const Vec2 f1 = avoidance_force(1, pair, field, rho0);
  CHECK((f0 + f1).norm() < 1e-9);
  CHECK(f0.x() < 0.0);
  // Both agents see each other, so the pair contributes the barrier twice.
  CHECK(f0.norm() == doctest::Approx(2.0 * 2.0 * (1 / 0.1 - 1 / rho0) / 0.01));
  CHECK(avoidance_potential(pair, field, rho0) == doctest::Approx(2.0 / (rho0 * rho0)));

  const std::vector<Vec2> apart{Vec2(10, 10), Vec2(10.25, 10)};
  CHECK(avoidance_force(0, apart, field, rho0).norm() == 0.0);
  CHECK(avoidance_potential(apart, field, rho0) == 0.0);
}

TEST_CASE("avoidance force near an obstacle") {
  const SkewField field(Workspace(0, 20, 0, 20), {Obstacle::circle({5, 5}, 1.0)});
  const double rho0 = 0.2;
  const std::vector<Vec2> one{Vec2(6.1, 5)};
  const Vec2 f = avoidance_force(0, one, field, rho0);
  CHECK(f.x() == doctest::Approx(2.0 * (1 / 0.1 - 1 / rho0) / 0.01));
  CHECK(std::abs(f.y()) < 1e-9);
  CHECK(avoidance_potential(one, field, rho0) == doctest::Approx(1.0 / (rho0 * rho0)));

  bool near = false;
  const std::vector<Vec2> touching{Vec2(6.0 + 1e-8, 5)};
  const Vec2 big = avoidance_force(0, touching, field, rho0, nullptr, &near);
  CHECK(near);
  CHECK(big.norm() == doctest::Approx(kNearCollisionForce));
}

TEST_CASE("avoidance force is the negative gradient of the avoidance potential") {
  const SkewField field(Workspace(0, 20, 0, 20), {Obstacle::circle({5, 5}, 1.0)});
  const double rho0 = 0.3;
  const std::vector<Vec2> pts{Vec2(6.15, 5.05), Vec2(6.3, 5.2), Vec2(9, 9)};
  for (std::size_t n = 0; n < pts.size(); ++n) {
    const Vec2 f = avoidance_force(n, pts, field, rho0);
    Vec2 fd;
    for (int k = 0; k < 2; ++k) {
      std::vector<Vec2> plus = pts, minus = pts;
      plus[n][k] += 1e-7;
      minus[n][k] -= 1e-7;
      fd[k] = -(avoidance_potential(plus, field, rho0) - avoidance_potential(minus, field, rho0)) / 2e-7;
    }
    CAPTURE(n);
    CHECK((f - fd).norm() < 1e-4 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("spatial hash agrees with brute force") {
  const std::vector<Vec2> pts = scatter(500, 0, 10, 3);
  const double r = 0.4;
  const SpatialHash hash(pts, r);
  for (std::size_t i = 0; i < pts.size(); i += 7) {
    std::size_t best = SpatialHash::npos;
    double best_d = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> within;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j == i) continue;
      const double d = (pts[j] - pts[i]).norm();
      if (d <= r) within.push_back(j);
      if (d <= r && d < best_d) {
        best = j;
        best_d = d;
      }
    }
    const auto [m, d] = hash.nearest(i, r);
    CHECK(m == best);
    if (best != SpatialHash::npos) CHECK(d == best_d);
    std::vector<std::size_t> got = hash.within(i, r);
    std::sort(got.begin(), got.end());
    CHECK(got == within);
  }
}

TEST_CASE("agents already on their target stay put") {
  const QuadratureGrid g = free_grid();
  SwarmState st({Vec2(8, 8), Vec2(10, 11), Vec2(12, 9)});
  ControlConfig cfg;
  const double h = 0.5;
  const DensityField target = kde(st.positions, h, g, cfg.kernel_radius);
  const std::vector<Vec2> before = st.positions;
  step_swarm(st, target, cfg, h);
  for (std::size_t n = 0; n < 3; ++n) CHECK((st.positions[n] - before[n]).norm() == 0.0);
  CHECK(st.step == 1);
}

TEST_CASE("speed limit and obstacle guard") {
  const QuadratureGrid g(SkewField(Workspace(0, 20, 0, 20), {Obstacle::rectangle(10, 5, 12, 14)}), 0.1, 0.1);
  const DensityField target = component_field(SNComponent({15, 9}, Mat2::Identity()), g);
  ControlConfig cfg;
  cfg.gamma_att = 1e6;
  SwarmState st(scatter(30, 6, 9.9, 2));
  EventLog log;
  for (int k = 0; k < 100; ++k) {
    const std::vector<Vec2> before = st.positions;
    step_swarm(st, target, cfg, 0.5, &log);
    for (std::size_t n = 0; n < st.positions.size(); ++n) {
      CHECK((st.positions[n] - before[n]).norm() <= cfg.v_max * cfg.dt * (1 + 1e-12));
      CHECK(g.field().is_free(st.positions[n]));
    }
  }
  for (std::size_t n = 0; n < st.positions.size(); ++n) CHECK(st.path_length[n] <= 100 * cfg.v_max * cfg.dt + 1e-9);
}

TEST_CASE("episode bookkeeping") {
  const QuadratureGrid g = free_grid();
  const plan::GoalSpec goal{SNComponent({12, 10}, Mat2::Identity())};
  const MixtureParams init{{1.0}, {SNComponent({8, 10}, Mat2::Identity())}};
  const plan::PlanTrajectory p = plan::plan_di(init, goal, 20);
  const SampleSet s = sample(init, g.field(), 100, 3);
  ControlConfig cfg;
  cfg.gamma_att = 2e4;
  cfg.settle_steps = 200;
  std::size_t frames = 0;
  const EpisodeResult r = run_episode(s.points, p, goal, g, cfg, [&](std::size_t, const DensityField&) { ++frames; });
  CHECK(frames == 20);
  CHECK(r.control_steps == 20 + 200);
  CHECK(r.trajectories.size() == 100);
  CHECK(r.trajectories[0].size() == 221);
  CHECK(r.speed_violations == 0);
  CHECK(r.infeasible_positions == 0);
  CHECK(r.kde_mass_min == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(r.bandwidth == doctest::Approx(rule_of_thumb_bandwidth(goal.component.sigma, 100)));
  CHECK(r.length_mean > 0.0);
  CHECK(r.final_relative_l2 < 0.5);
  CHECK(r.success);
  double direct = 0.0;
  for (std::size_t k = 1; k < r.trajectories[3].size(); ++k) direct += (r.trajectories[3][k] - r.trajectories[3][k - 1]).norm();
  CHECK(r.path_lengths[3] == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("control configuration validation") {
  ControlConfig cfg;
  cfg.v_max = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ControlConfig{};
  cfg.steps_per_frame = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
