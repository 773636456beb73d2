#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "snmm/planning.hpp"

namespace snmm::swarm {

struct ControlConfig {
  double gamma_att = 1.0;
  double gamma_ca = 1e-2;
  double rho0 = 0.2;           // m
  double kde_bandwidth = 0.0;  // m; 0 selects the rule-of-thumb value
  double dt = 0.05;            // s
  double v_max = 1.0;          // m/s
  int steps_per_frame = 1;
  /// Extra control steps on the final frame.
  int settle_steps = 0;
  /// KDE kernels are truncated at this many bandwidths.
  double kernel_radius = 6.0;
  /// Episode succeeds when ||kde - goal|| / ||goal|| ends at or below this.
  double success_relative_l2 = 0.5;
  /// Pairs closer than this count as collisions.
  double collision_distance = 1e-3;
  /// Keep a per-agent position log.
  bool record_trajectories = true;

  void validate() const;
};

/// h = sigma * n^(-1/6), sigma^2 the mean eigenvalue of `covariance`.
double rule_of_thumb_bandwidth(const Mat2& covariance, std::size_t n);

/// Isotropic Gaussian KDE with kernels truncated at `radius_factor * h`.
DensityField kde(std::span<const Vec2> positions, double h, const QuadratureGrid& grid,
                 double radius_factor = 6.0);

/// Quadrature of (kde - target)^2.
double attractive_potential(std::span<const Vec2> positions, double h, const DensityField& target,
                            double radius_factor = 6.0);
/// -dU_att/dx_n given the current KDE of all positions.
Vec2 attractive_force(std::size_t agent, std::span<const Vec2> positions, double h,
                      const DensityField& estimate, const DensityField& target,
                      double radius_factor = 6.0);

/// Uniform hash of points with square cells; neighbour queries return
/// indices in increasing order of cell, then insertion.
class SpatialHash {
 public:
  SpatialHash(std::span<const Vec2> points, double cell);

  /// Index and distance of the nearest other point within `radius`
  /// (radius <= cell), or {npos, +inf}.
  std::pair<std::size_t, double> nearest(std::size_t self, double radius) const;
  /// Every other point within `radius` (radius <= cell).
  std::vector<std::size_t> within(std::size_t self, double radius) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::int64_t key(std::int64_t cx, std::int64_t cy) const;
  std::pair<std::int64_t, std::int64_t> cell_of(const Vec2& p) const;

  std::span<const Vec2> points_;
  double cell_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> buckets_;
};

/// Nearest hazard of one agent: an obstacle boundary or another agent.
struct Hazard {
  double distance = 0.0;          // rho_n
  Vec2 gradient = Vec2::Zero();   // d rho_n / d x_n
  std::size_t agent = SpatialHash::npos;  // nearest agent, when it is the hazard
};

Hazard nearest_hazard(std::size_t agent, std::span<const Vec2> positions, const SkewField& field,
                      const SpatialHash& hash, double rho0);

/// sum_n (1/rho_n - 1/rho0)^2 over agents with rho_n <= rho0.
double avoidance_potential(std::span<const Vec2> positions, const SkewField& field, double rho0);

/// Forces are capped at this magnitude once rho_n <= 1e-6.
inline constexpr double kNearCollisionForce = 1e6;

/// -dU_ca/dx_n, including the terms of neighbours whose nearest hazard is n.
/// Sets *near_collision when a distance at or below 1e-6 forced the cap.
Vec2 avoidance_force(std::size_t agent, std::span<const Vec2> positions, const SkewField& field,
                     double rho0, const SpatialHash* hash = nullptr, bool* near_collision = nullptr);

enum class EventKind { NearCollision, WorkspaceClamp, ObstacleGuard, AgentCollision };

struct Event {
  std::size_t step;
  std::size_t agent;
  EventKind kind;
};

struct EventLog {
  std::vector<Event> events;  // first `capacity` events
  std::size_t capacity = 1000;
  std::size_t near_collisions = 0;
  std::size_t clamps = 0;
  std::size_t guards = 0;
  std::size_t agent_collisions = 0;

  void add(std::size_t step, std::size_t agent, EventKind kind);
};

struct SwarmState {
  std::vector<Vec2> positions;
  std::vector<double> path_length;
  std::size_t step = 0;

  explicit SwarmState(std::vector<Vec2> initial);
};

/// One synchronous control step toward `target`. Returns the KDE of the
/// positions before the step.
DensityField step_swarm(SwarmState& state, const DensityField& target, const ControlConfig& cfg,
                        double h, EventLog* log = nullptr);

struct EpisodeResult {
  std::vector<std::vector<Vec2>> trajectories;  // [agent][logged step]
  std::vector<double> path_lengths;
  double length_mean = 0.0;
  double length_std = 0.0;
  std::size_t control_steps = 0;
  std::size_t infeasible_positions = 0;  // logged positions with Q = 0
  std::size_t speed_violations = 0;
  double max_step_displacement = 0.0;
  double min_pair_distance = 0.0;
  double kde_mass_min = 0.0;
  double kde_mass_max = 0.0;
  double final_relative_l2 = 0.0;
  double bandwidth = 0.0;
  EventLog log;
  bool success = false;
};

using FrameCallback = std::function<void(std::size_t frame, const DensityField& estimate)>;

/// Follows every plan frame for steps_per_frame control steps, then settles
/// on the last frame; success needs no collisions and a final KDE close to
/// the goal density.
EpisodeResult run_episode(std::vector<Vec2> initial, const plan::PlanTrajectory& plan,
                          const plan::GoalSpec& goal, const QuadratureGrid& grid,
                          const ControlConfig& cfg, const FrameCallback& on_frame = {});

}  // namespace snmm::swarm
