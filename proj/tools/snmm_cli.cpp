// Batch command-line driver: learn, plan, simulate, experiment.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "snmm/experiment.hpp"

namespace {

using namespace snmm;
namespace fs = std::filesystem;
using io::Json;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<double> grid_dx;
  bool full = false;
};

io::Environment load_environment(const Globals& g, std::optional<Json>* raw = nullptr) {
  io::Environment env;
  env.field = SkewField(Workspace(), {});
  if (!g.config.empty()) {
    Json j = io::read_json(g.config);
    env = io::environment_from_json(j);
    if (raw) *raw = std::move(j);
  }
  if (g.grid_dx) env.dx = env.dy = *g.grid_dx;
  return env;
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoul(item));
  }
  if (out.empty()) throw ConfigError("empty component list");
  return out;
}

plan::GoalSpec load_goal(const std::string& goal_path, const std::optional<Json>& config) {
  if (!goal_path.empty()) return {io::component_from_json(io::read_json(goal_path))};
  if (config && config->contains("goal")) return {io::component_from_json(config->at("goal"))};
  throw ConfigError("no goal given (use --goal or a config with a 'goal' entry)");
}

void write_episode_metrics(const fs::path& path, const swarm::EpisodeResult& ep) {
  std::ofstream out(path, std::ios::binary);
  out << "length_mean,length_std,control_steps,agent_collisions,infeasible_positions,"
         "speed_violations,near_collisions,final_relative_l2,success\n";
  out << io::num(ep.length_mean) << ',' << io::num(ep.length_std) << ',' << ep.control_steps << ','
      << ep.log.agent_collisions << ',' << ep.infeasible_positions << ',' << ep.speed_violations
      << ',' << ep.log.near_collisions << ',' << io::num(ep.final_relative_l2) << ','
      << ep.success << '\n';
}

int run_learn(const Globals& g, const std::string& data_path, const std::string& nc_list) {
  const io::Environment env = load_environment(g);
  const QuadratureGrid grid = env.grid();
  const std::vector<Vec2> data = io::read_points_csv(data_path);
  const fs::path out(g.out);
  fs::create_directories(out);
  io::Manifest m;
  m.command = "learn";
  m.inputs = {{"data", data_path}, {"config", g.config}};
  m.seeds = {{"learn", g.seed.value_or(1)}};
  std::ofstream table(out / "nll_vs_nc.csv", std::ios::binary);
  table << "n_components,snmm_nll,gmm_nll\n";
  for (std::size_t nc : parse_list(nc_list)) {
    learn::LearnConfig cfg;
    cfg.n_components = nc;
    cfg.seed = g.seed.value_or(1);
    cfg.grid_dx = env.dx;
    cfg.grid_dy = env.dy;
    learn::GmmConfig gc;
    gc.n_components = nc;
    gc.seed = cfg.seed;
    const MixtureParams gmm = learn::fit_gmm(data, gc);
    const learn::FitResult fit = learn::fit_snmm_from(data, gmm, cfg, grid);
    const std::string tag = "nc" + std::to_string(nc);
    io::write_json(out / ("params_" + tag + ".json"), io::mixture_to_json(fit.params));
    io::write_trace_csv(out / ("trace_" + tag + ".csv"), fit.nll_trace);
    table << nc << ',' << io::num(learn::nll(data, fit.params, grid).value) << ','
          << io::num(learn::gmm_nll(data, gmm)) << '\n';
    m.artifacts.push_back("params_" + tag + ".json");
    m.artifacts.push_back("trace_" + tag + ".csv");
  }
  m.artifacts.push_back("nll_vs_nc.csv");
  m.config_hash = io::hex64(io::fnv1a64(g.config + nc_list));
  io::write_manifest(out, m);
  std::cout << "wrote " << out.string() << '\n';
  return 0;
}

int run_plan(const Globals& g, const std::string& initial_path, const std::string& goal_path,
             const std::string& planner_name, plan::ApfConfig apf, int di_steps) {
  std::optional<Json> raw;
  const io::Environment env = load_environment(g, &raw);
  const QuadratureGrid grid = env.grid();
  const MixtureParams initial = io::mixture_from_json(io::read_json(initial_path));
  const plan::GoalSpec goal = load_goal(goal_path, raw);
  const plan::Planner planner = plan::parse_planner(planner_name);
  plan::PlanTrajectory traj;
  switch (planner) {
    case plan::Planner::Di: traj = plan::plan_di(initial, goal, di_steps); break;
    case plan::Planner::SnmmApf: traj = plan::plan_apf(initial, goal, grid, apf, plan::ApfMode::Snmm); break;
    case plan::Planner::GmmApf: traj = plan::plan_apf(initial, goal, grid, apf, plan::ApfMode::Gmm); break;
  }
  const fs::path out(g.out);
  fs::create_directories(out);
  io::write_trajectory_csv(out / "trajectory.csv", traj);
  io::write_potential_csv(out / "potential.csv", traj);
  io::write_json(out / "plan.json",
                 {{"planner", plan::planner_name(planner)}, {"steps", traj.steps},
                  {"success", traj.success}, {"stagnant", traj.stagnant}});
  io::Manifest m;
  m.command = "plan";
  m.inputs = {{"initial", initial_path}, {"goal", goal_path}, {"config", g.config}};
  m.artifacts = {"trajectory.csv", "potential.csv", "plan.json"};
  m.config_hash = io::hex64(io::fnv1a64(g.config + initial_path + planner_name));
  io::write_manifest(out, m);
  std::cout << plan::planner_name(planner) << " steps=" << traj.steps
            << " success=" << (traj.success ? "yes" : "no") << '\n';
  return traj.success ? 0 : 1;
}

int run_simulate(const Globals& g, const std::string& plan_path, const std::string& goal_path,
                 const std::string& agents_path, std::size_t count, swarm::ControlConfig cc,
                 bool rasters) {
  std::optional<Json> raw;
  const io::Environment env = load_environment(g, &raw);
  const QuadratureGrid grid = env.grid();
  const plan::PlanTrajectory traj = io::read_trajectory_csv(plan_path);
  const plan::GoalSpec goal = load_goal(goal_path, raw);
  std::vector<Vec2> agents;
  if (!agents_path.empty()) {
    agents = io::read_points_csv(agents_path);
  } else {
    agents = sample(traj.frames.front().params, env.field, g.full ? 300 : count, g.seed.value_or(1)).points;
  }
  const fs::path out(g.out);
  fs::create_directories(out);
  io::Manifest m;
  swarm::FrameCallback cb;
  if (rasters) {
    fs::create_directories(out / "kde");
    cb = [&](std::size_t frame, const DensityField& est) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%05zu.txt", frame);
      io::write_raster(out / "kde" / name, est.grid(), est.values());
      m.artifacts.push_back(std::string("kde/") + name);
      m.artifacts.push_back(std::string("kde/") + name + ".hdr");
    };
  }
  const swarm::EpisodeResult ep = swarm::run_episode(agents, traj, goal, grid, cc, cb);
  {
    std::ofstream t(out / "agents.csv", std::ios::binary);
    t << "agent_id,step,x,y\n";
    for (std::size_t n = 0; n < ep.trajectories.size(); ++n) {
      for (std::size_t s = 0; s < ep.trajectories[n].size(); ++s) {
        t << n << ',' << s << ',' << io::num(ep.trajectories[n][s].x()) << ','
          << io::num(ep.trajectories[n][s].y()) << '\n';
      }
    }
  }
  write_episode_metrics(out / "episode_metrics.csv", ep);
  m.command = "simulate";
  m.inputs = {{"plan", plan_path}, {"agents", agents_path}, {"config", g.config}};
  m.seeds = {{"agents", g.seed.value_or(1)}};
  m.artifacts.push_back("agents.csv");
  m.artifacts.push_back("episode_metrics.csv");
  m.config_hash = io::hex64(io::fnv1a64(g.config + plan_path));
  io::write_manifest(out, m);
  std::cout << "length " << ep.length_mean << " +- " << ep.length_std
            << " success=" << (ep.success ? "yes" : "no") << '\n';
  return ep.success ? 0 : 1;
}

int run_experiment(const Globals& g, const std::string& which) {
  const fs::path out(g.out);
  if (which == "exp-a") {
    exp::ScenarioConfig sc = g.config.empty() ? exp::exp_a_scenario(g.seed.value_or(1))
                                              : exp::scenario_from_json(io::read_json(g.config));
    if (g.seed) sc.seed = *g.seed;
    if (g.grid_dx) sc.env.dx = sc.env.dy = sc.learn.grid_dx = sc.learn.grid_dy = *g.grid_dx;
    const exp::ExpAData data = exp::gen_exp_a(sc);
    const exp::ExpAResult res = exp::run_exp_a(sc, data.data);
    fs::create_directories(out);
    io::write_json(out / "scenario.json", exp::scenario_to_json(sc));
    io::write_points_csv(out / "data.csv", data.data);
    io::write_occupancy_raster(out / "occupancy.txt", sc.env.grid());
    io::Manifest m;
    m.artifacts = {"scenario.json", "data.csv", "occupancy.txt", "occupancy.txt.hdr", "nll_table.csv"};
    std::ofstream table(out / "nll_table.csv", std::ios::binary);
    table << "approach,n_components,nll,error\n";
    for (const auto& c : res.cells) {
      table << c.approach << ',' << c.n_components << ',' << io::num(c.nll) << ',' << c.error << '\n';
      if (c.params.size() > 0) {
        const std::string name = "params_" + c.approach + "_nc" + std::to_string(c.n_components) + ".json";
        io::write_json(out / name, io::mixture_to_json(c.params));
        m.artifacts.push_back(name);
      }
      if (!c.trace.empty()) {
        const std::string name = "trace_snmm_nc" + std::to_string(c.n_components) + ".csv";
        io::write_trace_csv(out / name, c.trace);
        m.artifacts.push_back(name);
      }
      std::cout << c.approach << " N_C=" << c.n_components << " NLL=" << io::num(c.nll) << '\n';
    }
    if (const exp::NllCell* two = res.find("snmm", 2); two && two->params.size() == 2) {
      std::ofstream rec(out / "recovery.csv", std::ios::binary);
      rec << "n_components,max_mean_error\n2,"
          << io::num(exp::mean_recovery_error(two->params, sc.source)) << '\n';
      m.artifacts.push_back("recovery.csv");
    }
    m.command = "experiment exp-a";
    m.config_hash = exp::config_hash(sc);
    m.seeds = {{"data", sc.seed}, {"learn", sc.seed}};
    m.inputs = {{"config", g.config}};
    io::write_manifest(out, m);
    return 0;
  }
  exp::ForestVariant v;
  if (which == "forest-i") v = exp::ForestVariant::I;
  else if (which == "forest-ii") v = exp::ForestVariant::II;
  else throw UsageError("unknown experiment '" + which + "'");
  exp::ScenarioConfig sc = g.config.empty() ? exp::gen_forest(v, g.seed.value_or(1))
                                            : exp::scenario_from_json(io::read_json(g.config));
  if (g.seed) sc.seed = *g.seed;
  if (g.grid_dx) sc.env.dx = sc.env.dy = sc.learn.grid_dx = sc.learn.grid_dy = *g.grid_dx;
  if (g.full) exp::rescale_agents(sc, 300);
  const exp::ForestRun run = exp::run_forest(
      sc, {plan::Planner::Di, plan::Planner::SnmmApf, plan::Planner::GmmApf}, out);
  for (const auto& r : run.table.rows) {
    std::cout << r.simulation << ' ' << r.approach << " steps=" << r.steps
              << " time=" << io::num(r.planning_seconds) << "s length=" << io::num(r.length_mean)
              << "+-" << io::num(r.length_std) << " success=" << (r.success() ? "Yes" : "No")
              << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skew-normal mixture learning and swarm path planning"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Scenario or environment JSON");
  app.add_option("--seed", g.seed, "Seed for every stochastic stage");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--grid-dx", g.grid_dx, "Quadrature grid spacing (m)")->check(CLI::PositiveNumber);
  app.add_flag("--full", g.full, "Full-scale swarm (N=300)");

  std::string data_path, nc_list = "1,2,3,4,5";
  auto* learn_cmd = app.add_subcommand("learn", "Fit skew-normal mixtures to samples");
  learn_cmd->add_option("--data", data_path, "CSV with header x,y")->required();
  learn_cmd->add_option("--nc", nc_list, "Comma-separated component counts");

  std::string initial_path, goal_path, planner_name = "snmm-apf";
  plan::ApfConfig apf;
  int di_steps = 200;
  auto* plan_cmd = app.add_subcommand("plan", "Plan a distribution trajectory");
  plan_cmd->add_option("--initial", initial_path, "Mixture JSON")->required();
  plan_cmd->add_option("--goal", goal_path, "Goal component JSON");
  plan_cmd->add_option("--planner", planner_name, "di | snmm-apf | gmm-apf");
  plan_cmd->add_option("--di-steps", di_steps);
  plan_cmd->add_option("--max-steps", apf.max_steps);
  plan_cmd->add_option("--gamma-sn", apf.gamma_sn);
  plan_cmd->add_option("--gamma-cs", apf.gamma_cs);
  plan_cmd->add_option("--gamma-rep", apf.gamma_rep);
  plan_cmd->add_option("--eta", apf.eta);
  plan_cmd->add_option("--step-mu", apf.step_mu);
  plan_cmd->add_option("--step-L", apf.step_L);
  plan_cmd->add_option("--max-factor-step", apf.max_factor_step);

  std::string plan_path, agents_path;
  std::size_t count = 100;
  bool rasters = false;
  swarm::ControlConfig cc;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the swarm controller along a plan");
  sim_cmd->add_option("--plan", plan_path, "Trajectory CSV")->required();
  sim_cmd->add_option("--goal", goal_path, "Goal component JSON");
  sim_cmd->add_option("--agents", agents_path, "Initial agent CSV (x,y)");
  sim_cmd->add_option("--count", count, "Agents sampled from the first frame");
  sim_cmd->add_option("--gamma-att", cc.gamma_att);
  sim_cmd->add_option("--gamma-ca", cc.gamma_ca);
  sim_cmd->add_option("--rho0", cc.rho0);
  sim_cmd->add_option("--dt", cc.dt);
  sim_cmd->add_option("--v-max", cc.v_max);
  sim_cmd->add_option("--steps-per-frame", cc.steps_per_frame);
  sim_cmd->add_option("--settle-steps", cc.settle_steps);
  sim_cmd->add_flag("--kde-rasters", rasters, "Write a KDE raster per frame");

  std::string which;
  auto* exp_cmd = app.add_subcommand("experiment", "Run a packaged experiment");
  exp_cmd->add_option("name", which, "exp-a | forest-i | forest-ii")
      ->required()
      ->check(CLI::IsMember({"exp-a", "forest-i", "forest-ii"}));

  for (auto* sub : {learn_cmd, plan_cmd, sim_cmd, exp_cmd}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (learn_cmd->parsed()) return run_learn(g, data_path, nc_list);
    if (plan_cmd->parsed()) return run_plan(g, initial_path, goal_path, planner_name, apf, di_steps);
    if (sim_cmd->parsed()) return run_simulate(g, plan_path, goal_path, agents_path, count, cc, rasters);
    if (exp_cmd->parsed()) return run_experiment(g, which);
  } catch (const snmm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
