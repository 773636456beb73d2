#include "snmm/planning.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "snmm/learning.hpp"

namespace snmm::plan {

void GoalSpec::validate(const QuadratureGrid& grid) const {
  validate_component(component);
  double z = 0.0;
  try {
    z = skew_normalizer(component, grid);
  } catch (const BlockedComponentError&) {
    z = 0.0;
  }
  if (!(z > 1e-3)) throw ConfigError("goal distribution is almost entirely blocked");
}

std::string_view planner_name(Planner p) {
  switch (p) {
    case Planner::Di: return "snmm-di";
    case Planner::SnmmApf: return "snmm-apf";
    case Planner::GmmApf: return "gmm-apf";
  }
  return "unknown";
}

Planner parse_planner(std::string_view name) {
  if (name == "di" || name == "snmm-di") return Planner::Di;
  if (name == "snmm-apf") return Planner::SnmmApf;
  if (name == "gmm-apf") return Planner::GmmApf;
  throw ConfigError("unknown planner '" + std::string(name) + "'");
}

void ApfConfig::validate() const {
  if (gamma_sn < 0.0 || gamma_cs < 0.0 || gamma_sn + gamma_cs <= 0.0) {
    throw ConfigError("APF weights must be non-negative and not both zero");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
  if (gamma_rep < 0.0) throw ConfigError("gamma_rep must be non-negative");
  if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
  if (!(step_mu > 0.0) || !(step_L > 0.0) || !(max_mean_step > 0.0) ||
      !(max_factor_step > 0.0)) {
    throw ConfigError("APF step sizes must be positive");
  }
  if (!(fd_step > 0.0)) throw ConfigError("finite-difference step must be positive");
  if (!(success_fraction > 0.0)) throw ConfigError("success fraction must be positive");
  if (stagnation_window < 1 || max_backtracks < 0) throw ConfigError("invalid APF loop limits");
}

Mat2 di_covariance(const Mat2& sigma0, const Mat2& sigma_f, double s) {
  const Eigen::SelfAdjointEigenSolver<Mat2> e0(sigma0);
  if (e0.info() != Eigen::Success || !(e0.eigenvalues().minCoeff() > 0.0)) {
    throw ParameterError("initial covariance is not positive definite");
  }
  const Mat2 root = e0.operatorSqrt();
  const Mat2 inv_root = e0.operatorInverseSqrt();
  const Mat2 inner = root * sigma_f * root;
  const Eigen::SelfAdjointEigenSolver<Mat2> ei(0.5 * (inner + inner.transpose()));
  if (ei.info() != Eigen::Success || !(ei.eigenvalues().minCoeff() > 0.0)) {
    throw ParameterError("goal covariance is not positive definite");
  }
  const Mat2 m = (1.0 - s) * sigma0 + s * ei.operatorSqrt();
  const Mat2 out = inv_root * m * m * inv_root;
  return 0.5 * (out + out.transpose());
}

PlanTrajectory plan_di(const MixtureParams& initial, const GoalSpec& goal, int steps) {
  if (steps < 1) throw ConfigError("DI needs at least one step");
  initial.validate();
  validate_component(goal.component);
  PlanTrajectory traj;
  traj.planner = Planner::Di;
  traj.steps = steps;
  traj.frames.reserve(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) {
    const double s = static_cast<double>(k) / steps;
    MixtureParams p = initial;
    if (k > 0) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const SNComponent& c0 = initial.components[i];
        if (k == steps) {
          p.components[i] = goal.component;
        } else {
          p.components[i] = SNComponent((1.0 - s) * c0.mu + s * goal.component.mu,
                                        di_covariance(c0.sigma, goal.component.sigma, s));
        }
      }
    }
    traj.frames.push_back({s, std::move(p)});
  }
  traj.success = true;
  return traj;
}

PlanTrajectory plan_apf(const MixtureParams& initial, const GoalSpec& goal,
                        const QuadratureGrid& grid, const ApfConfig& cfg, ApfMode mode) {
  cfg.validate();
  initial.validate();
  goal.validate(grid);

  PlanTrajectory traj;
  traj.planner = mode == ApfMode::Snmm ? Planner::SnmmApf : Planner::GmmApf;
  traj.gaussian_frames = mode == ApfMode::Gmm;

  ApfObjective obj(goal, grid, cfg, mode);
  obj.set_state(initial);
  ApfObjective::Terms current = obj.terms();
  const double threshold = obj.success_threshold();

  traj.frames.push_back({0.0, initial});
  traj.potential.push_back(current.total);
  traj.potential_sn.push_back(current.sn);

  bool reached = current.sn <= threshold;
  bool fixed_point = false;
  while (!reached && traj.steps < cfg.max_steps) {
    if (!fixed_point) {
      const std::vector<ComponentTheta> grad = obj.gradient(cfg.fd_step);
      const MixtureParams& p = obj.state();
      std::vector<ComponentTheta> base(p.size()), dir(p.size());
      double largest = 0.0, largest_l = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        base[i] = pack(p.components[i]);
        for (std::size_t k = 0; k < 5; ++k) {
          dir[i][k] = -(k < 2 ? cfg.step_mu : cfg.step_L) * grad[i][k];
        }
        largest = std::max(largest, std::hypot(dir[i][0], dir[i][1]));
        for (std::size_t k = 2; k < 5; ++k) largest_l = std::max(largest_l, std::abs(dir[i][k]));
      }
      // Means and factors are capped separately, then backtracked together.
      const double t_mu = largest > cfg.max_mean_step ? cfg.max_mean_step / largest : 1.0;
      const double t_l = largest_l > cfg.max_factor_step ? cfg.max_factor_step / largest_l : 1.0;
      for (auto& d : dir) {
        for (std::size_t k = 0; k < 5; ++k) d[k] *= k < 2 ? t_mu : t_l;
      }
      double t = 1.0;

      bool accepted = false;
      for (int bt = 0; bt <= cfg.max_backtracks && !accepted; ++bt, t *= 0.5) {
        try {
          MixtureParams cand = p;
          for (std::size_t i = 0; i < p.size(); ++i) {
            ComponentTheta th = base[i];
            for (std::size_t k = 0; k < 5; ++k) th[k] += t * dir[i][k];
            const SNComponent c = unpack(th);
            cand.components[i] =
                SNComponent(c.mu, learn::floor_covariance(c.sigma, cfg.covariance_floor));
          }
          ApfObjective trial = obj;
          trial.set_state(cand);
          const ApfObjective::Terms tt = trial.terms();
          if (tt.total < current.total) {
            obj = std::move(trial);
            current = tt;
            accepted = true;
          }
        } catch (const ParameterError&) {
        } catch (const BlockedComponentError&) {
        }
      }
      // A rejected step leaves the state, and so every later iteration, unchanged.
      fixed_point = !accepted;
    }
    ++traj.steps;
    traj.frames.push_back({0.0, obj.state()});
    traj.potential.push_back(current.total);
    traj.potential_sn.push_back(current.sn);
    reached = current.sn <= threshold;
  }

  if (traj.steps == 0) {
    traj.steps = 1;
    traj.frames.push_back(traj.frames.front());
    traj.potential.push_back(traj.potential.front());
    traj.potential_sn.push_back(traj.potential_sn.front());
  }
  for (std::size_t k = 0; k < traj.frames.size(); ++k) {
    traj.frames[k].s = static_cast<double>(k) / traj.steps;
  }
  traj.success = reached;
  if (!reached) {
    const std::size_t n = traj.potential.size();
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(cfg.stagnation_window), n - 1);
    traj.stagnant = traj.potential[n - 1 - w] - traj.potential[n - 1] < cfg.convergence_threshold;
  }
  return traj;
}

}  // namespace snmm::plan
