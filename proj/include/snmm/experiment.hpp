#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "snmm/io.hpp"
#include "snmm/learning.hpp"
#include "snmm/planning.hpp"
#include "snmm/swarm.hpp"

namespace snmm::exp {

/// Everything needed to rerun one experiment.
struct ScenarioConfig {
  std::string name;
  io::Environment env;
  /// Ground-truth data generator (Exp-A) or initial swarm distribution (forests).
  MixtureParams source;
  std::optional<plan::GoalSpec> goal;
  /// Data points (Exp-A) or agents (forests).
  std::size_t count = 300;
  std::uint64_t seed = 1;
  learn::LearnConfig learn;
  plan::ApfConfig apf;
  swarm::ControlConfig control;
  int di_steps = 200;
  std::vector<std::size_t> nc_sweep{1, 2, 3, 4, 5};
  int gmm_restarts = 3;
};

io::Json scenario_to_json(const ScenarioConfig& c);
/// Missing fields keep their defaults; throws ConfigError.
ScenarioConfig scenario_from_json(const io::Json& j);
/// Hash of the canonical JSON dump.
std::string config_hash(const ScenarioConfig& c);

// ---- Exp-A: learning on a single rectangular obstacle ----

MixtureParams exp_a_ground_truth();
ScenarioConfig exp_a_scenario(std::uint64_t seed);

struct ExpAData {
  ScenarioConfig config;
  std::vector<Vec2> data;
  std::vector<std::size_t> labels;
};
ExpAData gen_exp_a(std::uint64_t seed);
/// Draws config.count samples from config.source with config.seed.
ExpAData gen_exp_a(const ScenarioConfig& config);

struct NllCell {
  std::string approach;  // "snmm", "gmm", "snmm-gmm"
  std::size_t n_components;
  double nll;
  std::string error;  // empty on success
  MixtureParams params;
  std::vector<double> trace;  // SNMM only
};

struct ExpAResult {
  std::vector<NllCell> cells;
  const NllCell* find(std::string_view approach, std::size_t nc) const;
};

ExpAResult run_exp_a(const ScenarioConfig& config, std::span<const Vec2> data);

/// Largest mean error under the best matching of fitted to true components.
double mean_recovery_error(const MixtureParams& fitted, const MixtureParams& truth);

// ---- Forests: path planning ----

enum class ForestVariant { I, II };

/// Forest-I: 14 trees in a fixed staggered layout. Forest-II: 50 smaller
/// seeded-random trees. Throws ConfigError if placement fails.
ScenarioConfig gen_forest(ForestVariant variant, std::uint64_t seed);

/// Changes the agent count and scales gamma_att by the same factor, since the
/// attraction on each agent carries a 1/N factor from the KDE.
void rescale_agents(ScenarioConfig& config, std::size_t count);

struct ResultRow {
  std::string simulation;
  std::string approach;
  int steps = 0;
  double planning_seconds = 0.0;
  double length_mean = 0.0;
  double length_std = 0.0;
  bool plan_success = false;
  bool plan_stagnant = false;
  bool episode_success = false;
  double final_relative_l2 = 0.0;
  std::size_t agent_collisions = 0;
  std::size_t infeasible_positions = 0;
  std::size_t speed_violations = 0;
  double min_pair_distance = 0.0;
  bool success() const { return plan_success && episode_success; }
};

struct ResultsTable {
  std::vector<ResultRow> rows;

  /// Deterministic metrics (no wall time).
  void write_metrics_csv(const io::fs::path& path) const;
  /// Table I layout including planning wall time.
  void write_results_csv(const io::fs::path& path) const;
  const ResultRow* find(std::string_view approach) const;
};

struct ApproachRun {
  plan::Planner planner;
  plan::PlanTrajectory plan;
  swarm::EpisodeResult episode;
};

struct ForestRun {
  ResultsTable table;
  MixtureParams fitted;
  std::vector<Vec2> initial_agents;
  std::vector<ApproachRun> runs;
};

/// Samples agents, fits a 2-component SNMM, then plans and simulates each
/// approach. Writes artifacts and a manifest when `out` is set.
ForestRun run_forest(const ScenarioConfig& config, const std::vector<plan::Planner>& approaches,
                     const std::optional<io::fs::path>& out = std::nullopt);

}  // namespace snmm::exp
