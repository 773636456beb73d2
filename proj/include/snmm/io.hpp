#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "snmm/planning.hpp"

namespace snmm::io {

using Json = nlohmann::json;
namespace fs = std::filesystem;

/// Fixed-format number text used by every CSV and raster writer.
std::string num(double v);

Json read_json(const fs::path& path);
void write_json(const fs::path& path, const Json& j);

Obstacle obstacle_from_json(const Json& j);
Json obstacle_to_json(const Obstacle& o);

/// Workspace, obstacles and grid spacing.
struct Environment {
  SkewField field;
  double dx = 0.1;
  double dy = 0.1;

  QuadratureGrid grid() const { return QuadratureGrid(field, dx, dy); }
};
Environment environment_from_json(const Json& j);
Json environment_to_json(const Environment& env);

SNComponent component_from_json(const Json& j);
Json component_to_json(const SNComponent& c);
MixtureParams mixture_from_json(const Json& j);
Json mixture_to_json(const MixtureParams& p);

/// CSV with header "x,y".
std::vector<Vec2> read_points_csv(const fs::path& path);
void write_points_csv(const fs::path& path, std::span<const Vec2> points);

struct RasterHeader {
  std::size_t nx = 0, ny = 0;
  double dx = 0.0, dy = 0.0;
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
};

/// One text row per lattice row, first row at the lowest y, space separated,
/// plus a sidecar "<path>.hdr" describing the lattice.
void write_raster(const fs::path& path, const QuadratureGrid& grid, std::span<const double> values);
void write_occupancy_raster(const fs::path& path, const QuadratureGrid& grid);
struct Raster {
  RasterHeader header;
  std::vector<double> values;
};
Raster read_raster(const fs::path& path);

/// One frame per line: s, w_1..w_K, mu_1x, mu_1y, ..., then each sigma as
/// (xx, xy, yy).
void write_trajectory_csv(const fs::path& path, const plan::PlanTrajectory& traj);
plan::PlanTrajectory read_trajectory_csv(const fs::path& path);
/// step, total potential, U_SN.
void write_potential_csv(const fs::path& path, const plan::PlanTrajectory& traj);

/// outer iteration, NLL.
void write_trace_csv(const fs::path& path, const std::vector<double>& trace);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

struct Manifest {
  std::string command;
  std::string config_hash;
  Json inputs = Json::object();
  Json seeds = Json::object();
  std::vector<std::string> artifacts;  // paths relative to the output directory
};
void write_manifest(const fs::path& dir, const Manifest& m);
Manifest read_manifest(const fs::path& dir);

}  // namespace snmm::io
