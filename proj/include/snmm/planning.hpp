#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "snmm/mixture.hpp"

namespace snmm::plan {

/// Desired final distribution: a single skew-normal component.
struct GoalSpec {
  SNComponent component;

  /// Throws ConfigError when the goal keeps less than 1e-3 of its mass in
  /// free space.
  void validate(const QuadratureGrid& grid) const;
};

enum class Planner { Di, SnmmApf, GmmApf };

std::string_view planner_name(Planner p);
/// Accepts "di", "snmm-di", "snmm-apf", "gmm-apf"; throws ConfigError.
Planner parse_planner(std::string_view name);

struct PlanFrame {
  double s;  // normalized time in [0, 1]
  MixtureParams params;
};

struct PlanTrajectory {
  Planner planner = Planner::Di;
  std::vector<PlanFrame> frames;
  /// Total potential per frame (APF planners; empty for DI).
  std::vector<double> potential;
  /// Shape-matching term U_SN per frame (APF planners).
  std::vector<double> potential_sn;
  /// Optimization steps taken; frames.size() == steps + 1.
  int steps = 0;
  bool success = false;
  /// Potential decrease stayed below the convergence threshold over the
  /// stagnation window while still far from the goal.
  bool stagnant = false;
  /// Planning frames use Gaussian (unskewed) densities.
  bool gaussian_frames = false;
};

struct ApfConfig {
  double gamma_sn = 1.0;
  double gamma_cs = 1.0;
  int max_steps = 3000;
  double step_mu = 0.05;   // m per unit gradient
  double step_L = 0.02;
  /// Largest mean displacement of any component in one step, m.
  double max_mean_step = 0.1;
  /// Largest change of any Cholesky factor entry in one step.
  double max_factor_step = 0.003;
  /// Decrease of the total potential below which a step counts as stagnant.
  double convergence_threshold = 1e-6;
  int stagnation_window = 50;
  /// Success once the squared L2 distance to the goal is at most this
  /// fraction of the goal self-energy.
  double success_fraction = 0.01;
  double gamma_rep = 1.0;  // GMM mode only
  double eta = 0.05;       // GMM mode only
  double fd_step = 1e-4;
  int max_backtracks = 10;
  double covariance_floor = 1e-4;

  void validate() const;
};

/// Parameters of one component as optimized by the APF planners:
/// (mu_x, mu_y, L00, L10, L11) with sigma^-1 = L L^T.
using ComponentTheta = std::array<double, 5>;
ComponentTheta pack(const SNComponent& c);
SNComponent unpack(const ComponentTheta& theta);

/// Displacement-interpolation covariance at normalized time s.
Mat2 di_covariance(const Mat2& sigma0, const Mat2& sigma_f, double s);

PlanTrajectory plan_di(const MixtureParams& initial, const GoalSpec& goal, int steps);

/// 0.5 ln of the squared L2 distance between mixture and goal densities;
/// -infinity when the distance is zero.
double potential_sn(const MixtureParams& params, const GoalSpec& goal, const QuadratureGrid& grid);
/// sum_i w_i D_CS(f_i || f_goal); +infinity when a component misses the goal.
double potential_cs(const MixtureParams& params, const GoalSpec& goal, const QuadratureGrid& grid);
/// sum_i w_i * integral of the Gaussian part of component i over occupied cells.
double repulsive_potential(const MixtureParams& params, const QuadratureGrid& grid);

enum class ApfMode { Snmm, Gmm };

/// The planning potential with cached component fields and inner products,
/// so perturbing one component re-evaluates only that component's field.
class ApfObjective {
 public:
  struct Terms {
    double sn = 0.0;        // U_SN
    double cs = 0.0;        // U_CS
    double rep = 0.0;       // U_Rep (GMM mode)
    double rep_term = 0.0;  // penalty contribution, zero when U_Rep <= eta
    double total = 0.0;
  };

  ApfObjective(const GoalSpec& goal, const QuadratureGrid& grid, const ApfConfig& cfg, ApfMode mode);

  /// Replace the cached state.
  void set_state(const MixtureParams& params);
  const MixtureParams& state() const { return params_; }
  Terms terms() const;
  /// Terms with component i replaced, cached state untouched.
  Terms terms_with(std::size_t i, const SNComponent& comp) const;
  /// Central finite-difference gradient with respect to pack() of every
  /// component at the cached state, with step h.
  std::vector<ComponentTheta> gradient(double h) const;

  /// Threshold on U_SN that counts as reaching the goal.
  double success_threshold() const;
  /// Grid the potential is evaluated on (the obstacle-free twin in GMM mode).
  const QuadratureGrid& eval_grid() const { return eval_grid_; }

 private:
  std::vector<double> field_of(const SNComponent& c) const;
  Terms combine(const Eigen::MatrixXd& gram, const std::vector<double>& cross,
                const std::vector<double>& rep) const;

  ApfConfig cfg_;
  ApfMode mode_;
  QuadratureGrid grid_;
  QuadratureGrid eval_grid_;
  std::vector<double> goal_field_;
  double goal_self_ = 0.0;
  MixtureParams params_;
  std::vector<std::vector<double>> fields_;
  Eigen::MatrixXd gram_;
  std::vector<double> cross_;
  std::vector<double> rep_;
};

PlanTrajectory plan_apf(const MixtureParams& initial, const GoalSpec& goal,
                        const QuadratureGrid& grid, const ApfConfig& cfg, ApfMode mode);

}  // namespace snmm::plan
