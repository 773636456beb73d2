#include "snmm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace snmm::exp {

namespace {

using io::Json;

template <class T>
void read_opt(const Json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

Json learn_to_json(const learn::LearnConfig& c) {
  return {{"outer_iterations", c.outer_iterations}, {"inner_iterations", c.inner_iterations},
          {"lambda_mu", c.lambda_mu},               {"lambda_L", c.lambda_L},
          {"weight_floor", c.weight_floor},         {"covariance_floor", c.covariance_floor},
          {"max_backtracks", c.max_backtracks},     {"early_stop_tolerance", c.early_stop_tolerance},
          {"early_stop_patience", c.early_stop_patience}};
}

void learn_from_json(const Json& j, learn::LearnConfig& c) {
  read_opt(j, "outer_iterations", c.outer_iterations);
  read_opt(j, "inner_iterations", c.inner_iterations);
  read_opt(j, "lambda_mu", c.lambda_mu);
  read_opt(j, "lambda_L", c.lambda_L);
  read_opt(j, "weight_floor", c.weight_floor);
  read_opt(j, "covariance_floor", c.covariance_floor);
  read_opt(j, "max_backtracks", c.max_backtracks);
  read_opt(j, "early_stop_tolerance", c.early_stop_tolerance);
  read_opt(j, "early_stop_patience", c.early_stop_patience);
}

Json apf_to_json(const plan::ApfConfig& c) {
  return {{"gamma_sn", c.gamma_sn},
          {"gamma_cs", c.gamma_cs},
          {"max_steps", c.max_steps},
          {"step_mu", c.step_mu},
          {"step_L", c.step_L},
          {"max_mean_step", c.max_mean_step},
          {"max_factor_step", c.max_factor_step},
          {"convergence_threshold", c.convergence_threshold},
          {"stagnation_window", c.stagnation_window},
          {"success_fraction", c.success_fraction},
          {"gamma_rep", c.gamma_rep},
          {"eta", c.eta},
          {"fd_step", c.fd_step},
          {"max_backtracks", c.max_backtracks}};
}

void apf_from_json(const Json& j, plan::ApfConfig& c) {
  read_opt(j, "gamma_sn", c.gamma_sn);
  read_opt(j, "gamma_cs", c.gamma_cs);
  read_opt(j, "max_steps", c.max_steps);
  read_opt(j, "step_mu", c.step_mu);
  read_opt(j, "step_L", c.step_L);
  read_opt(j, "max_mean_step", c.max_mean_step);
  read_opt(j, "max_factor_step", c.max_factor_step);
  read_opt(j, "convergence_threshold", c.convergence_threshold);
  read_opt(j, "stagnation_window", c.stagnation_window);
  read_opt(j, "success_fraction", c.success_fraction);
  read_opt(j, "gamma_rep", c.gamma_rep);
  read_opt(j, "eta", c.eta);
  read_opt(j, "fd_step", c.fd_step);
  read_opt(j, "max_backtracks", c.max_backtracks);
}

Json control_to_json(const swarm::ControlConfig& c) {
  return {{"gamma_att", c.gamma_att},
          {"gamma_ca", c.gamma_ca},
          {"rho0", c.rho0},
          {"kde_bandwidth", c.kde_bandwidth},
          {"dt", c.dt},
          {"v_max", c.v_max},
          {"steps_per_frame", c.steps_per_frame},
          {"settle_steps", c.settle_steps},
          {"kernel_radius", c.kernel_radius},
          {"success_relative_l2", c.success_relative_l2}};
}

void control_from_json(const Json& j, swarm::ControlConfig& c) {
  read_opt(j, "gamma_att", c.gamma_att);
  read_opt(j, "gamma_ca", c.gamma_ca);
  read_opt(j, "rho0", c.rho0);
  read_opt(j, "kde_bandwidth", c.kde_bandwidth);
  read_opt(j, "dt", c.dt);
  read_opt(j, "v_max", c.v_max);
  read_opt(j, "steps_per_frame", c.steps_per_frame);
  read_opt(j, "settle_steps", c.settle_steps);
  read_opt(j, "kernel_radius", c.kernel_radius);
  read_opt(j, "success_relative_l2", c.success_relative_l2);
}

Mat2 mat(double xx, double xy, double yy) {
  Mat2 m;
  m << xx, xy, xy, yy;
  return m;
}

void write_agents_csv(const io::fs::path& path, const swarm::EpisodeResult& ep, std::size_t stride) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "agent_id,step,x,y\n";
  for (std::size_t n = 0; n < ep.trajectories.size(); ++n) {
    const auto& t = ep.trajectories[n];
    for (std::size_t s = 0; s < t.size(); ++s) {
      if (s % stride != 0 && s + 1 != t.size()) continue;
      out << n << ',' << s << ',' << io::num(t[s].x()) << ',' << io::num(t[s].y()) << '\n';
    }
  }
}

}  // namespace

Json scenario_to_json(const ScenarioConfig& c) {
  Json j = io::environment_to_json(c.env);
  j["name"] = c.name;
  j["source"] = io::mixture_to_json(c.source);
  if (c.goal) j["goal"] = io::component_to_json(c.goal->component);
  j["count"] = c.count;
  j["seed"] = c.seed;
  j["learn"] = learn_to_json(c.learn);
  j["apf"] = apf_to_json(c.apf);
  j["control"] = control_to_json(c.control);
  j["di_steps"] = c.di_steps;
  j["nc_sweep"] = c.nc_sweep;
  j["gmm_restarts"] = c.gmm_restarts;
  return j;
}

ScenarioConfig scenario_from_json(const Json& j) {
  try {
    ScenarioConfig c;
    c.env = io::environment_from_json(j);
    read_opt(j, "name", c.name);
    if (!j.contains("source")) throw ConfigError("scenario needs a 'source' mixture");
    c.source = io::mixture_from_json(j.at("source"));
    if (j.contains("goal")) c.goal = plan::GoalSpec{io::component_from_json(j.at("goal"))};
    read_opt(j, "count", c.count);
    read_opt(j, "seed", c.seed);
    if (j.contains("learn")) learn_from_json(j.at("learn"), c.learn);
    if (j.contains("apf")) apf_from_json(j.at("apf"), c.apf);
    if (j.contains("control")) control_from_json(j.at("control"), c.control);
    read_opt(j, "di_steps", c.di_steps);
    read_opt(j, "nc_sweep", c.nc_sweep);
    read_opt(j, "gmm_restarts", c.gmm_restarts);
    c.learn.grid_dx = c.env.dx;
    c.learn.grid_dy = c.env.dy;
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
}

std::string config_hash(const ScenarioConfig& c) {
  return io::hex64(io::fnv1a64(scenario_to_json(c).dump()));
}

MixtureParams exp_a_ground_truth() {
  MixtureParams p;
  p.weights = {0.5, 0.5};
  p.components = {SNComponent(Vec2(9.0, 12.0), mat(1.0, 0.3, 0.7)),
                  SNComponent(Vec2(9.0, 7.0), mat(1.0, -0.3, 0.7))};
  return p;
}

ScenarioConfig exp_a_scenario(std::uint64_t seed) {
  ScenarioConfig c;
  c.name = "exp-a";
  c.env.field = SkewField(Workspace(0.0, 20.0, 0.0, 20.0),
                          {Obstacle::rectangle(10.0, 5.0, 12.0, 14.0)});
  c.source = exp_a_ground_truth();
  c.count = 300;
  c.seed = seed;
  return c;
}

ExpAData gen_exp_a(std::uint64_t seed) { return gen_exp_a(exp_a_scenario(seed)); }

ExpAData gen_exp_a(const ScenarioConfig& config) {
  SampleSet s = sample(config.source, config.env.field, config.count, config.seed);
  return {config, std::move(s.points), std::move(s.labels)};
}

const NllCell* ExpAResult::find(std::string_view approach, std::size_t nc) const {
  for (const auto& c : cells) {
    if (c.approach == approach && c.n_components == nc) return &c;
  }
  return nullptr;
}

ExpAResult run_exp_a(const ScenarioConfig& config, std::span<const Vec2> data) {
  const QuadratureGrid grid = config.env.grid();
  ExpAResult out;
  for (std::size_t nc : config.nc_sweep) {
    learn::GmmConfig g;
    g.n_components = nc;
    g.seed = config.seed;
    g.restarts = config.gmm_restarts;
    g.covariance_floor = config.learn.covariance_floor;
    NllCell gmm{"gmm", nc, std::numeric_limits<double>::infinity(), {}, {}, {}};
    NllCell mixed{"snmm-gmm", nc, std::numeric_limits<double>::infinity(), {}, {}, {}};
    NllCell snmm{"snmm", nc, std::numeric_limits<double>::infinity(), {}, {}, {}};
    try {
      gmm.params = learn::fit_gmm(data, g);
      gmm.nll = learn::gmm_nll(data, gmm.params);
      mixed.params = gmm.params;
      mixed.nll = learn::nll(data, gmm.params, grid).value;
      learn::LearnConfig lc = config.learn;
      lc.n_components = nc;
      lc.seed = config.seed;
      const learn::FitResult fit = learn::fit_snmm_from(data, gmm.params, lc, grid);
      snmm.params = fit.params;
      snmm.trace = fit.nll_trace;
      snmm.nll = learn::nll(data, fit.params, grid).value;
    } catch (const Error& e) {
      if (gmm.params.size() == 0) gmm.error = e.what();
      snmm.error = e.what();
    }
    out.cells.push_back(std::move(snmm));
    out.cells.push_back(std::move(gmm));
    out.cells.push_back(std::move(mixed));
  }
  return out;
}

double mean_recovery_error(const MixtureParams& fitted, const MixtureParams& truth) {
  if (fitted.size() != truth.size()) throw UsageError("component counts differ");
  std::vector<std::size_t> perm(truth.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double worst = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      worst = std::max(worst, (fitted.components[perm[i]].mu - truth.components[i].mu).norm());
    }
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

ScenarioConfig gen_forest(ForestVariant variant, std::uint64_t seed) {
  ScenarioConfig c;
  c.seed = seed;
  c.count = 100;
  const Workspace ws(0.0, 20.0, 0.0, 20.0);
  c.source.weights = {0.5, 0.5};
  c.source.components = {SNComponent(Vec2(3.0, 12.5), mat(0.5, 0.0, 0.8)),
                         SNComponent(Vec2(3.0, 7.5), mat(0.5, 0.0, 0.8))};
  c.goal = plan::GoalSpec{SNComponent(Vec2(17.0, 10.0), mat(0.8, 0.0, 1.2))};
  c.control.gamma_att = 2.0e4;
  c.control.steps_per_frame = 2;
  c.control.settle_steps = 200;

  std::vector<Obstacle> trees;
  if (variant == ForestVariant::I) {
    c.name = "forest-i";
    // Three staggered columns (3 + 4 + 3) and four trees inside the goal support.
    const double r = 0.6;
    for (double y : {5.5, 10.0, 14.5}) trees.push_back(Obstacle::circle({8.0, y}, r));
    for (double y : {3.5, 7.75, 12.25, 16.5}) trees.push_back(Obstacle::circle({10.5, y}, r));
    for (double y : {5.5, 10.0, 14.5}) trees.push_back(Obstacle::circle({13.0, y}, r));
    for (double dx : {-1.0, 1.0}) {
      for (double dy : {-1.4, 1.4}) trees.push_back(Obstacle::circle({17.0 + dx, 10.0 + dy}, r));
    }
    c.env.field = SkewField(ws, std::move(trees));
    return c;
  }

  c.name = "forest-ii";
  const double r = 0.3;
  const double min_centre_gap = 2.0 * r + 0.8;
  const std::size_t count = 50;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(6.0, 19.5), uy(1.5, 18.5);
  const SkewField free(ws, {});
  const QuadratureGrid probe(free, 0.1, 0.1);
  const double eta = c.apf.eta;
  for (int layout = 0; layout < 200; ++layout) {
    std::vector<Vec2> centres;
    int proposals = 0;
    while (centres.size() < count && proposals < 10000) {
      ++proposals;
      const Vec2 p(ux(rng), uy(rng));
      bool ok = true;
      for (const auto& q : centres) ok = ok && (p - q).norm() >= min_centre_gap;
      if (ok) centres.push_back(p);
    }
    if (centres.size() < count) continue;
    std::vector<Obstacle> obs;
    for (const auto& p : centres) obs.push_back(Obstacle::circle(p, r));
    const SkewField field(ws, obs);
    const QuadratureGrid grid(field, 0.1, 0.1);
    // Goal support at least 90 % free, yet cluttered enough that an
    // obstacle-blind Gaussian overlaps the trees by more than eta.
    MixtureParams goal_only{{1.0}, {c.goal->component}};
    const double goal_blocked = plan::repulsive_potential(goal_only, grid);
    const double start_blocked = plan::repulsive_potential(c.source, grid);
    if (goal_blocked >= 1.2 * eta && goal_blocked <= 0.1 && start_blocked <= 0.1) {
      c.env.field = field;
      return c;
    }
  }
  throw ConfigError("forest layout placement infeasible");
}

void rescale_agents(ScenarioConfig& config, std::size_t count) {
  if (count == 0) throw ConfigError("agent count must be positive");
  config.control.gamma_att *= static_cast<double>(count) / static_cast<double>(config.count);
  config.count = count;
}

void ResultsTable::write_metrics_csv(const io::fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "simulation,approach,steps,length_mean,length_std,plan_success,plan_stagnant,"
         "episode_success,final_relative_l2,agent_collisions,infeasible_positions,"
         "speed_violations,min_pair_distance,success\n";
  for (const auto& r : rows) {
    out << r.simulation << ',' << r.approach << ',' << r.steps << ',' << io::num(r.length_mean)
        << ',' << io::num(r.length_std) << ',' << r.plan_success << ',' << r.plan_stagnant << ','
        << r.episode_success << ',' << io::num(r.final_relative_l2) << ',' << r.agent_collisions
        << ',' << r.infeasible_positions << ',' << r.speed_violations << ','
        << io::num(r.min_pair_distance) << ',' << (r.success() ? "Yes" : "No") << '\n';
  }
}

void ResultsTable::write_results_csv(const io::fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "simulation,approach,steps,time_s,length_mean,length_std,success\n";
  for (const auto& r : rows) {
    out << r.simulation << ',' << r.approach << ',' << r.steps << ','
        << io::num(r.planning_seconds) << ',' << io::num(r.length_mean) << ','
        << io::num(r.length_std) << ',' << (r.success() ? "Yes" : "No") << '\n';
  }
}

const ResultRow* ResultsTable::find(std::string_view approach) const {
  for (const auto& r : rows) {
    if (r.approach == approach) return &r;
  }
  return nullptr;
}

ForestRun run_forest(const ScenarioConfig& config, const std::vector<plan::Planner>& approaches,
                     const std::optional<io::fs::path>& out) {
  if (!config.goal) throw ConfigError("forest scenario needs a goal");
  const QuadratureGrid grid = config.env.grid();
  config.goal->validate(grid);

  ForestRun run;
  run.initial_agents = sample(config.source, config.env.field, config.count, config.seed).points;
  learn::LearnConfig lc = config.learn;
  lc.n_components = 2;
  lc.seed = config.seed;
  lc.gmm_restarts = config.gmm_restarts;
  run.fitted = learn::fit_snmm(run.initial_agents, lc, grid).params;

  io::Manifest manifest;
  if (out) {
    io::fs::create_directories(*out);
    io::write_json(*out / "scenario.json", scenario_to_json(config));
    io::write_occupancy_raster(*out / "occupancy.txt", grid);
    io::write_points_csv(*out / "agents_initial.csv", run.initial_agents);
    io::write_json(*out / "fitted_params.json", io::mixture_to_json(run.fitted));
    manifest.artifacts = {"scenario.json", "occupancy.txt", "occupancy.txt.hdr",
                          "agents_initial.csv", "fitted_params.json"};
  }

  for (plan::Planner p : approaches) {
    ApproachRun ar{p, {}, {}};
    const auto t0 = std::chrono::steady_clock::now();
    switch (p) {
      case plan::Planner::Di:
        ar.plan = plan::plan_di(run.fitted, *config.goal, config.di_steps);
        break;
      case plan::Planner::SnmmApf:
        ar.plan = plan::plan_apf(run.fitted, *config.goal, grid, config.apf, plan::ApfMode::Snmm);
        break;
      case plan::Planner::GmmApf:
        ar.plan = plan::plan_apf(run.fitted, *config.goal, grid, config.apf, plan::ApfMode::Gmm);
        break;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ar.episode = swarm::run_episode(run.initial_agents, ar.plan, *config.goal, grid, config.control);

    ResultRow row;
    row.simulation = config.name;
    row.approach = std::string(plan::planner_name(p));
    row.steps = ar.plan.steps;
    row.planning_seconds = seconds;
    row.length_mean = ar.episode.length_mean;
    row.length_std = ar.episode.length_std;
    row.plan_success = ar.plan.success;
    row.plan_stagnant = ar.plan.stagnant;
    row.episode_success = ar.episode.success;
    row.final_relative_l2 = ar.episode.final_relative_l2;
    row.agent_collisions = ar.episode.log.agent_collisions;
    row.infeasible_positions = ar.episode.infeasible_positions;
    row.speed_violations = ar.episode.speed_violations;
    row.min_pair_distance = ar.episode.min_pair_distance;
    run.table.rows.push_back(row);

    if (out) {
      const std::string name = row.approach;
      io::fs::create_directories(*out / name);
      io::write_trajectory_csv(*out / name / "trajectory.csv", ar.plan);
      io::write_potential_csv(*out / name / "potential.csv", ar.plan);
      write_agents_csv(*out / name / "agents.csv", ar.episode,
                       static_cast<std::size_t>(config.control.steps_per_frame));
      for (const char* f : {"trajectory.csv", "potential.csv", "agents.csv"}) {
        manifest.artifacts.push_back(name + "/" + f);
      }
    }
    run.runs.push_back(std::move(ar));
  }

  if (out) {
    run.table.write_metrics_csv(*out / "metrics.csv");
    run.table.write_results_csv(*out / "results_table.csv");
    manifest.artifacts.push_back("metrics.csv");
    manifest.artifacts.push_back("results_table.csv");
    manifest.command = "experiment " + config.name;
    manifest.config_hash = config_hash(config);
    manifest.seeds = {{"agents", config.seed}, {"learn", config.seed}};
    manifest.inputs = {{"scenario", "scenario.json"}, {"agents", config.count}};
    io::write_manifest(*out, manifest);
  }
  return run;
}

}  // namespace snmm::exp
