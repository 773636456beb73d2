#include "snmm/swarm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <Eigen/Eigenvalues>

#include "snmm/simd/kernels.hpp"

namespace snmm::swarm {

namespace {

constexpr double kNearDistance = 1e-6;

// Mass of an isotropic Gaussian kernel inside the workspace and its gradient
// with respect to the kernel centre.
struct KernelMass {
  double mass;
  Vec2 gradient;
};

KernelMass kernel_mass(const Vec2& x, double h, const Workspace& ws) {
  auto axis = [h](double v, double lo, double hi) {
    const double a = (lo - v) / h, b = (hi - v) / h;
    const double m = 0.5 * (std::erf(b / std::numbers::sqrt2) - std::erf(a / std::numbers::sqrt2));
    const double pa = std::exp(-0.5 * a * a), pb = std::exp(-0.5 * b * b);
    return std::pair{m, (pa - pb) / (h * std::sqrt(2.0 * std::numbers::pi))};
  };
  const auto [mx, dx] = axis(x.x(), ws.x_min(), ws.x_max());
  const auto [my, dy] = axis(x.y(), ws.y_min(), ws.y_max());
  return {mx * my, Vec2(dx * my, mx * dy)};
}

// Kernels are renormalized to unit mass inside the workspace.
simd::GaussCoeffs kernel_at(const Vec2& x, double h, double mass) {
  simd::GaussCoeffs c;
  c.mx = x.x();
  c.my = x.y();
  c.pxx = c.pyy = 1.0 / (h * h);
  c.pxy = 0.0;
  c.log_norm = -std::log(2.0 * std::numbers::pi * h * h) - std::log(mass);
  return c;
}

// Calls fn(first_index, count) for each lattice row segment of the square
// window of half-width r around x.
template <class Fn>
void for_window(const QuadratureGrid& grid, const Vec2& x, double r, Fn&& fn) {
  const auto [ix0, iy0] = grid.cell_of(x - Vec2(r, r));
  const auto [ix1, iy1] = grid.cell_of(x + Vec2(r, r));
  for (std::size_t iy = iy0; iy <= iy1; ++iy) fn(grid.index(ix0, iy), ix1 - ix0 + 1);
}

Vec2 attraction_from_residual(const Vec2& x, std::size_t n_agents, double h,
                              const QuadratureGrid& grid, const double* residual,
                              double radius_factor) {
  const KernelMass km = kernel_mass(x, h, grid.field().workspace());
  const simd::GaussCoeffs c = kernel_at(x, h, km.mass);
  const simd::KernelTable& k = simd::active();
  const double* xs = grid.xs().data();
  const double* ys = grid.ys().data();
  double s0 = 0.0, sx = 0.0, sy = 0.0;
  for_window(grid, x, radius_factor * h, [&](std::size_t first, std::size_t count) {
    const simd::Moments m = k.gaussian_moments(xs + first, ys + first, residual + first, count, c);
    s0 += m.m0;
    sx += m.mx;
    sy += m.my;
  });
  // d/dx of K/c is K (y - x) / (c h^2) - K grad(c) / c^2.
  const Vec2 g = Vec2(sx, sy) / (h * h) - s0 * km.gradient / km.mass;
  return -2.0 / static_cast<double>(n_agents) * grid.cell_area() * g;
}

std::vector<Hazard> all_hazards(std::span<const Vec2> positions, const SkewField& field,
                                const SpatialHash& hash, double rho0) {
  std::vector<Hazard> out(positions.size());
  for (std::size_t n = 0; n < positions.size(); ++n) {
    out[n] = nearest_hazard(n, positions, field, hash, rho0);
  }
  return out;
}

double barrier_slope(double rho, double rho0) {
  return 2.0 * (1.0 / rho - 1.0 / rho0) / (rho * rho);
}

Vec2 force_from_hazards(std::size_t n, std::span<const Vec2> positions,
                        const std::vector<Hazard>& hz, const SpatialHash& hash, double rho0,
                        bool* near_collision) {
  const Hazard& own = hz[n];
  if (own.distance <= kNearDistance) {
    if (near_collision) *near_collision = true;
    const double g = own.gradient.norm();
    return g > 0.0 ? Vec2(kNearCollisionForce * own.gradient / g) : Vec2(Vec2::Zero());
  }
  Vec2 f = Vec2::Zero();
  if (own.distance <= rho0) f += barrier_slope(own.distance, rho0) * own.gradient;
  for (std::size_t m : hash.within(n, rho0)) {
    const Hazard& other = hz[m];
    if (other.agent != n || other.distance > rho0 || other.distance <= kNearDistance) continue;
    f += barrier_slope(other.distance, rho0) * (positions[n] - positions[m]) / other.distance;
  }
  return f;
}

}  // namespace

void ControlConfig::validate() const {
  if (!(gamma_att > 0.0) || !(gamma_ca > 0.0) || !(rho0 > 0.0) || !(dt > 0.0) ||
      !(v_max > 0.0) || steps_per_frame < 1 || kde_bandwidth < 0.0 || settle_steps < 0 ||
      !(kernel_radius > 0.0)) {
    throw ConfigError("control parameters must be positive");
  }
}

double rule_of_thumb_bandwidth(const Mat2& covariance, std::size_t n) {
  if (n == 0) throw ConfigError("bandwidth needs at least one agent");
  const double sigma = std::sqrt(0.5 * covariance.trace());
  return sigma * std::pow(static_cast<double>(n), -1.0 / 6.0);
}

DensityField kde(std::span<const Vec2> positions, double h, const QuadratureGrid& grid,
                 double radius_factor) {
  if (positions.empty()) throw UsageError("KDE needs at least one point");
  if (!(h > 0.0)) throw ConfigError("KDE bandwidth must be positive");
  std::vector<double> values(grid.size(), 0.0);
  const simd::KernelTable& k = simd::active();
  const double alpha = 1.0 / static_cast<double>(positions.size());
  const double* xs = grid.xs().data();
  const double* ys = grid.ys().data();
  const Workspace& ws = grid.field().workspace();
  for (const auto& p : positions) {
    const simd::GaussCoeffs c = kernel_at(p, h, kernel_mass(p, h, ws).mass);
    for_window(grid, p, radius_factor * h, [&](std::size_t first, std::size_t count) {
      k.gaussian_accumulate(xs + first, ys + first, count, c, alpha, values.data() + first);
    });
  }
  return DensityField(grid, std::move(values));
}

double attractive_potential(std::span<const Vec2> positions, double h, const DensityField& target,
                            double radius_factor) {
  const DensityField est = kde(positions, h, target.grid(), radius_factor);
  return simd::squared_distance(est.values(), target.values()) * target.grid().cell_area();
}

Vec2 attractive_force(std::size_t agent, std::span<const Vec2> positions, double h,
                      const DensityField& estimate, const DensityField& target,
                      double radius_factor) {
  if (estimate.values().size() != target.values().size()) {
    throw UsageError("estimate and target live on different grids");
  }
  std::vector<double> residual(estimate.values().size());
  for (std::size_t j = 0; j < residual.size(); ++j) {
    residual[j] = estimate.values()[j] - target.values()[j];
  }
  return attraction_from_residual(positions[agent], positions.size(), h, estimate.grid(),
                                  residual.data(), radius_factor);
}

SpatialHash::SpatialHash(std::span<const Vec2> points, double cell) : points_(points), cell_(cell) {
  if (!(cell > 0.0)) throw ConfigError("hash cell size must be positive");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto [cx, cy] = cell_of(points[i]);
    buckets_[key(cx, cy)].push_back(i);
  }
}

std::int64_t SpatialHash::key(std::int64_t cx, std::int64_t cy) const {
  return (cx << 32) ^ (cy & 0xffffffffLL);
}

std::pair<std::int64_t, std::int64_t> SpatialHash::cell_of(const Vec2& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
          static_cast<std::int64_t>(std::floor(p.y() / cell_))};
}

std::pair<std::size_t, double> SpatialHash::nearest(std::size_t self, double radius) const {
  const Vec2& p = points_[self];
  const auto [cx, cy] = cell_of(p);
  std::size_t best = npos;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::int64_t dy = -1; dy <= 1; ++dy) {
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      const auto it = buckets_.find(key(cx + dx, cy + dy));
      if (it == buckets_.end()) continue;
      for (std::size_t j : it->second) {
        if (j == self) continue;
        const double d = (points_[j] - p).norm();
        if (d <= radius && (d < best_d || (d == best_d && j < best))) {
          best = j;
          best_d = d;
        }
      }
    }
  }
  return {best, best_d};
}

std::vector<std::size_t> SpatialHash::within(std::size_t self, double radius) const {
  const Vec2& p = points_[self];
  const auto [cx, cy] = cell_of(p);
  std::vector<std::size_t> out;
  for (std::int64_t dy = -1; dy <= 1; ++dy) {
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      const auto it = buckets_.find(key(cx + dx, cy + dy));
      if (it == buckets_.end()) continue;
      for (std::size_t j : it->second) {
        if (j != self && (points_[j] - p).norm() <= radius) out.push_back(j);
      }
    }
  }
  return out;
}

Hazard nearest_hazard(std::size_t agent, std::span<const Vec2> positions, const SkewField& field,
                      const SpatialHash& hash, double rho0) {
  const Vec2& x = positions[agent];
  const DistanceQuery cq = field.clearance_query(x);
  const auto [m, d] = hash.nearest(agent, rho0);
  Hazard h;
  if (m != SpatialHash::npos && d < cq.distance) {
    h.distance = d;
    h.gradient = d > 0.0 ? Vec2((x - positions[m]) / d) : Vec2(Vec2::Zero());
    h.agent = m;
  } else {
    h.distance = cq.distance;
    h.gradient = cq.gradient;
  }
  return h;
}

double avoidance_potential(std::span<const Vec2> positions, const SkewField& field, double rho0) {
  const SpatialHash hash(positions, rho0);
  double total = 0.0;
  for (std::size_t n = 0; n < positions.size(); ++n) {
    const Hazard h = nearest_hazard(n, positions, field, hash, rho0);
    if (h.distance <= rho0 && h.distance > 0.0) {
      const double v = 1.0 / h.distance - 1.0 / rho0;
      total += v * v;
    }
  }
  return total;
}

Vec2 avoidance_force(std::size_t agent, std::span<const Vec2> positions, const SkewField& field,
                     double rho0, const SpatialHash* hash, bool* near_collision) {
  std::optional<SpatialHash> local;
  if (!hash) hash = &local.emplace(positions, rho0);
  const Hazard own = nearest_hazard(agent, positions, field, *hash, rho0);
  std::vector<Hazard> hz(positions.size());
  hz[agent] = own;
  for (std::size_t m : hash->within(agent, rho0)) {
    hz[m] = nearest_hazard(m, positions, field, *hash, rho0);
  }
  return force_from_hazards(agent, positions, hz, *hash, rho0, near_collision);
}

void EventLog::add(std::size_t step, std::size_t agent, EventKind kind) {
  switch (kind) {
    case EventKind::NearCollision: ++near_collisions; break;
    case EventKind::WorkspaceClamp: ++clamps; break;
    case EventKind::ObstacleGuard: ++guards; break;
    case EventKind::AgentCollision: ++agent_collisions; break;
  }
  if (events.size() < capacity) events.push_back({step, agent, kind});
}

SwarmState::SwarmState(std::vector<Vec2> initial)
    : positions(std::move(initial)), path_length(positions.size(), 0.0) {}

DensityField step_swarm(SwarmState& state, const DensityField& target, const ControlConfig& cfg,
                        double h, EventLog* log) {
  const QuadratureGrid& grid = target.grid();
  const SkewField& field = grid.field();
  const Workspace& ws = field.workspace();
  const std::span<const Vec2> pos(state.positions);
  const std::size_t n_agents = pos.size();

  DensityField est = kde(pos, h, grid, cfg.kernel_radius);
  std::vector<double> residual(grid.size());
  for (std::size_t j = 0; j < residual.size(); ++j) residual[j] = est.values()[j] - target.values()[j];

  const SpatialHash hash(pos, cfg.rho0);
  const std::vector<Hazard> hz = all_hazards(pos, field, hash, cfg.rho0);

  std::vector<Vec2> next(n_agents);
  for (std::size_t n = 0; n < n_agents; ++n) {
    const Vec2& x = pos[n];
    bool near = false;
    const Vec2 fa = attraction_from_residual(x, n_agents, h, grid, residual.data(), cfg.kernel_radius);
    const Vec2 fc = force_from_hazards(n, pos, hz, hash, cfg.rho0, &near);
    if (near && log) log->add(state.step, n, EventKind::NearCollision);
    Vec2 u = cfg.gamma_att * fa + cfg.gamma_ca * fc;
    const double speed = u.norm();
    if (!std::isfinite(speed)) {
      u.setZero();
    } else if (speed > cfg.v_max) {
      u *= cfg.v_max / speed;
    }
    const Vec2 d = u * cfg.dt;
    Vec2 y = x + d;
    if (!ws.contains(y)) {
      y = ws.clamp(y);
      if (log) log->add(state.step, n, EventKind::WorkspaceClamp);
    }
    if (!field.is_free(y)) {
      // Shorten the move until it stays in free space; stay put otherwise.
      bool found = false;
      double t = 0.5;
      for (int k = 0; k < 10 && !found; ++k, t *= 0.5) {
        y = ws.clamp(x + t * d);
        found = field.is_free(y);
      }
      if (!found) y = x;
      if (log) log->add(state.step, n, EventKind::ObstacleGuard);
    }
    next[n] = y;
  }
  for (std::size_t n = 0; n < n_agents; ++n) {
    state.path_length[n] += (next[n] - pos[n]).norm();
  }
  state.positions = std::move(next);
  ++state.step;
  return est;
}

EpisodeResult run_episode(std::vector<Vec2> initial, const plan::PlanTrajectory& plan,
                          const plan::GoalSpec& goal, const QuadratureGrid& grid,
                          const ControlConfig& cfg, const FrameCallback& on_frame) {
  cfg.validate();
  if (initial.empty()) throw UsageError("episode needs at least one agent");
  if (plan.frames.empty()) throw UsageError("plan has no frames");
  const std::size_t n_agents = initial.size();
  const SkewField& field = grid.field();

  EpisodeResult res;
  res.bandwidth = cfg.kde_bandwidth > 0.0 ? cfg.kde_bandwidth
                                          : rule_of_thumb_bandwidth(goal.component.sigma, n_agents);
  res.min_pair_distance = std::numeric_limits<double>::infinity();
  res.kde_mass_min = std::numeric_limits<double>::infinity();
  res.kde_mass_max = -std::numeric_limits<double>::infinity();

  SwarmState state(std::move(initial));
  if (cfg.record_trajectories) {
    res.trajectories.resize(n_agents);
    for (std::size_t n = 0; n < n_agents; ++n) res.trajectories[n].push_back(state.positions[n]);
  }
  for (const auto& p : state.positions) {
    if (!field.is_free(p)) ++res.infeasible_positions;
  }

  const QuadratureGrid target_grid = plan.gaussian_frames ? grid.free_space_twin() : grid;
  const double limit = cfg.v_max * cfg.dt * (1.0 + 1e-12);

  auto run_steps = [&](const DensityField& target_on_twin, int count) {
    // Targets are evaluated on the twin lattice but the KDE lives on `grid`.
    const DensityField target(grid, std::vector<double>(target_on_twin.values().begin(),
                                                        target_on_twin.values().end()));
    for (int s = 0; s < count; ++s) {
      const std::vector<Vec2> before = state.positions;
      const DensityField est = step_swarm(state, target, cfg, res.bandwidth, &res.log);
      const double mass = est.integral();
      res.kde_mass_min = std::min(res.kde_mass_min, mass);
      res.kde_mass_max = std::max(res.kde_mass_max, mass);
      ++res.control_steps;
      const SpatialHash hash(state.positions, cfg.rho0);
      for (std::size_t n = 0; n < n_agents; ++n) {
        const Vec2& p = state.positions[n];
        const double moved = (p - before[n]).norm();
        res.max_step_displacement = std::max(res.max_step_displacement, moved);
        if (moved > limit) ++res.speed_violations;
        if (!field.is_free(p)) ++res.infeasible_positions;
        const auto [m, d] = hash.nearest(n, cfg.rho0);
        if (m != SpatialHash::npos) {
          res.min_pair_distance = std::min(res.min_pair_distance, d);
          if (d < cfg.collision_distance && n < m) {
            res.log.add(state.step, n, EventKind::AgentCollision);
          }
        }
        if (cfg.record_trajectories) res.trajectories[n].push_back(p);
      }
    }
  };

  const std::size_t first = plan.frames.size() > 1 ? 1 : 0;
  for (std::size_t f = first; f < plan.frames.size(); ++f) {
    const DensityField target = mixture_field(plan.frames[f].params, target_grid);
    int count = cfg.steps_per_frame;
    if (f + 1 == plan.frames.size()) count += cfg.settle_steps;
    run_steps(target, count);
    if (on_frame) on_frame(f, kde(state.positions, res.bandwidth, grid, cfg.kernel_radius));
  }

  const DensityField final_est = kde(state.positions, res.bandwidth, grid, cfg.kernel_radius);
  const DensityField goal_field = component_field(goal.component, grid);
  const double self = inner_product(goal_field, goal_field);
  res.final_relative_l2 = std::sqrt(l2_distance_sq(final_est, goal_field) / self);

  res.path_lengths = state.path_length;
  double mean = 0.0;
  for (double l : res.path_lengths) mean += l;
  mean /= static_cast<double>(n_agents);
  double var = 0.0;
  for (double l : res.path_lengths) var += (l - mean) * (l - mean);
  res.length_mean = mean;
  res.length_std = std::sqrt(var / static_cast<double>(n_agents));

  res.success = res.infeasible_positions == 0 && res.log.agent_collisions == 0 &&
                res.final_relative_l2 <= cfg.success_relative_l2;
  return res;
}

}  // namespace snmm::swarm
