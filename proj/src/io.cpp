#include "snmm/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace snmm::io {

namespace {

std::string format(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  return in;
}

Vec2 vec_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(std::string(what) + " must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Json vec_to_json(const Vec2& v) { return Json::array({v.x(), v.y()}); }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  return out;
}

double parse_double(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (s.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("malformed number '" + s + "' in " + path.string());
  }
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}

}  // namespace

std::string num(double v) { return format(v, 12); }

Json read_json(const fs::path& path) {
  std::ifstream in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

Obstacle obstacle_from_json(const Json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "circle") {
      return Obstacle::circle(vec_from_json(j.at("center"), "center"), j.at("radius").get<double>());
    }
    if (type == "rectangle") {
      const Vec2 lo = vec_from_json(j.at("min"), "min");
      const Vec2 hi = vec_from_json(j.at("max"), "max");
      return Obstacle::rectangle(lo.x(), lo.y(), hi.x(), hi.y());
    }
    if (type == "polygon") {
      std::vector<Vec2> v;
      for (const auto& p : j.at("vertices")) v.push_back(vec_from_json(p, "vertex"));
      return Obstacle::polygon(std::move(v));
    }
    if (type == "ellipse") {
      return Obstacle::ellipse(vec_from_json(j.at("center"), "center"),
                               vec_from_json(j.at("semi_axes"), "semi_axes"),
                               j.value("rotation", 0.0));
    }
    throw ConfigError("unknown obstacle type '" + type + "'");
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed obstacle: ") + e.what());
  }
}

Json obstacle_to_json(const Obstacle& o) {
  return std::visit(
      [](const auto& s) -> Json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Circle>) {
          return {{"type", "circle"}, {"center", vec_to_json(s.center)}, {"radius", s.radius}};
        } else if constexpr (std::is_same_v<T, ConvexPolygon>) {
          Json v = Json::array();
          for (const auto& p : s.vertices) v.push_back(vec_to_json(p));
          return {{"type", "polygon"}, {"vertices", v}};
        } else {
          return {{"type", "ellipse"},
                  {"center", vec_to_json(s.center)},
                  {"semi_axes", vec_to_json(s.semi_axes)},
                  {"rotation", s.rotation}};
        }
      },
      o.shape());
}

Environment environment_from_json(const Json& j) {
  try {
    Workspace ws;
    if (j.contains("workspace")) {
      const Json& w = j.at("workspace");
      ws = Workspace(w.at("x_min").get<double>(), w.at("x_max").get<double>(),
                     w.at("y_min").get<double>(), w.at("y_max").get<double>());
    }
    std::vector<Obstacle> obstacles;
    if (j.contains("obstacles")) {
      for (const auto& o : j.at("obstacles")) obstacles.push_back(obstacle_from_json(o));
    }
    Environment env{SkewField(ws, std::move(obstacles)), 0.1, 0.1};
    if (j.contains("grid")) {
      env.dx = j.at("grid").value("dx", 0.1);
      env.dy = j.at("grid").value("dy", env.dx);
    }
    return env;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed environment: ") + e.what());
  }
}

Json environment_to_json(const Environment& env) {
  const Workspace& ws = env.field.workspace();
  Json obstacles = Json::array();
  for (const auto& o : env.field.obstacles()) obstacles.push_back(obstacle_to_json(o));
  return {{"workspace",
           {{"x_min", ws.x_min()}, {"x_max", ws.x_max()}, {"y_min", ws.y_min()}, {"y_max", ws.y_max()}}},
          {"grid", {{"dx", env.dx}, {"dy", env.dy}}},
          {"obstacles", obstacles}};
}

SNComponent component_from_json(const Json& j) {
  try {
    const Vec2 mu = vec_from_json(j.at("mu"), "mu");
    const Json& s = j.at("sigma");
    Mat2 sigma;
    sigma << s.at(0).at(0).get<double>(), s.at(0).at(1).get<double>(), s.at(1).at(0).get<double>(),
        s.at(1).at(1).get<double>();
    return SNComponent(mu, sigma);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed component: ") + e.what());
  }
}

Json component_to_json(const SNComponent& c) {
  return {{"mu", vec_to_json(c.mu)},
          {"sigma", Json::array({Json::array({c.sigma(0, 0), c.sigma(0, 1)}),
                                 Json::array({c.sigma(1, 0), c.sigma(1, 1)})})}};
}

MixtureParams mixture_from_json(const Json& j) {
  try {
    MixtureParams p;
    p.weights = j.at("weights").get<std::vector<double>>();
    for (const auto& c : j.at("components")) p.components.push_back(component_from_json(c));
    p.validate();
    return p;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed mixture: ") + e.what());
  }
}

Json mixture_to_json(const MixtureParams& p) {
  Json comps = Json::array();
  for (const auto& c : p.components) comps.push_back(component_to_json(c));
  return {{"weights", p.weights}, {"components", comps}};
}

std::vector<Vec2> read_points_csv(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "x,y") {
    throw ConfigError(path.string() + ": expected header 'x,y'");
  }
  std::vector<Vec2> out;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 2) throw ConfigError(path.string() + ": expected two columns");
    out.emplace_back(parse_double(cells[0], path), parse_double(cells[1], path));
  }
  return out;
}

void write_points_csv(const fs::path& path, std::span<const Vec2> points) {
  std::ofstream out = open_out(path);
  out << "x,y\n";
  for (const auto& p : points) out << format(p.x(), 17) << ',' << format(p.y(), 17) << '\n';
}

void write_raster(const fs::path& path, const QuadratureGrid& grid, std::span<const double> values) {
  if (values.size() != grid.size()) throw UsageError("raster size does not match grid");
  {
    std::ofstream out = open_out(path);
    for (std::size_t iy = 0; iy < grid.ny(); ++iy) {
      for (std::size_t ix = 0; ix < grid.nx(); ++ix) {
        if (ix) out << ' ';
        out << num(values[grid.index(ix, iy)]);
      }
      out << '\n';
    }
  }
  const Workspace& ws = grid.workspace();
  std::ofstream hdr = open_out(fs::path(path.string() + ".hdr"));
  hdr << "nx " << grid.nx() << "\nny " << grid.ny() << "\ndx " << format(grid.dx(), 17) << "\ndy "
      << format(grid.dy(), 17) << "\nx_min " << format(ws.x_min(), 17) << "\nx_max "
      << format(ws.x_max(), 17) << "\ny_min " << format(ws.y_min(), 17) << "\ny_max "
      << format(ws.y_max(), 17) << "\nfirst_row lowest_y\n";
}

void write_occupancy_raster(const fs::path& path, const QuadratureGrid& grid) {
  write_raster(path, grid, grid.q());
}

Raster read_raster(const fs::path& path) {
  Raster r;
  {
    std::ifstream hdr = open_in(fs::path(path.string() + ".hdr"));
    std::string key, value;
    while (hdr >> key >> value) {
      if (key == "nx") r.header.nx = std::stoul(value);
      else if (key == "ny") r.header.ny = std::stoul(value);
      else if (key == "dx") r.header.dx = std::stod(value);
      else if (key == "dy") r.header.dy = std::stod(value);
      else if (key == "x_min") r.header.x_min = std::stod(value);
      else if (key == "x_max") r.header.x_max = std::stod(value);
      else if (key == "y_min") r.header.y_min = std::stod(value);
      else if (key == "y_max") r.header.y_max = std::stod(value);
    }
  }
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::istringstream is(line);
    double v;
    std::size_t cols = 0;
    while (is >> v) {
      r.values.push_back(v);
      ++cols;
    }
    if (cols != r.header.nx) throw ConfigError(path.string() + ": row width does not match header");
    ++rows;
  }
  if (rows != r.header.ny) throw ConfigError(path.string() + ": row count does not match header");
  return r;
}

void write_trajectory_csv(const fs::path& path, const plan::PlanTrajectory& traj) {
  if (traj.frames.empty()) throw UsageError("empty trajectory");
  const std::size_t k = traj.frames.front().params.size();
  std::ofstream out = open_out(path);
  out << "# planner=" << plan::planner_name(traj.planner) << " success=" << traj.success
      << " gaussian_frames=" << traj.gaussian_frames << '\n';
  out << 's';
  for (std::size_t i = 1; i <= k; ++i) out << ",w_" << i;
  for (std::size_t i = 1; i <= k; ++i) out << ",mu_" << i << "_x,mu_" << i << "_y";
  for (std::size_t i = 1; i <= k; ++i) {
    out << ",sigma_" << i << "_xx,sigma_" << i << "_xy,sigma_" << i << "_yy";
  }
  out << '\n';
  for (const auto& f : traj.frames) {
    out << format(f.s, 17);
    for (double w : f.params.weights) out << ',' << format(w, 17);
    for (const auto& c : f.params.components) {
      out << ',' << format(c.mu.x(), 17) << ',' << format(c.mu.y(), 17);
    }
    for (const auto& c : f.params.components) {
      out << ',' << format(c.sigma(0, 0), 17) << ',' << format(c.sigma(0, 1), 17) << ','
          << format(c.sigma(1, 1), 17);
    }
    out << '\n';
  }
}

plan::PlanTrajectory read_trajectory_csv(const fs::path& path) {
  std::ifstream in = open_in(path);
  plan::PlanTrajectory traj;
  std::string line;
  std::size_t k = 0;
  bool header = false;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream is(line.substr(1));
      std::string kv;
      while (is >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        if (key == "planner") traj.planner = plan::parse_planner(value);
        else if (key == "success") traj.success = value == "1";
        else if (key == "gaussian_frames") traj.gaussian_frames = value == "1";
      }
      continue;
    }
    const auto cells = split(line, ',');
    if (!header) {
      for (const auto& c : cells) k += c.rfind("w_", 0) == 0 ? 1 : 0;
      if (k == 0 || cells.size() != 1 + 6 * k) throw ConfigError(path.string() + ": bad header");
      header = true;
      continue;
    }
    if (cells.size() != 1 + 6 * k) throw ConfigError(path.string() + ": bad row width");
    std::vector<double> v;
    for (const auto& c : cells) v.push_back(parse_double(c, path));
    plan::PlanFrame f{v[0], {}};
    for (std::size_t i = 0; i < k; ++i) f.params.weights.push_back(v[1 + i]);
    for (std::size_t i = 0; i < k; ++i) {
      const Vec2 mu(v[1 + k + 2 * i], v[2 + k + 2 * i]);
      const std::size_t b = 1 + 3 * k + 3 * i;
      Mat2 s;
      s << v[b], v[b + 1], v[b + 1], v[b + 2];
      f.params.components.emplace_back(mu, s);
    }
    traj.frames.push_back(std::move(f));
  }
  if (traj.frames.empty()) throw ConfigError(path.string() + ": no frames");
  traj.steps = static_cast<int>(traj.frames.size()) - 1;
  return traj;
}

void write_potential_csv(const fs::path& path, const plan::PlanTrajectory& traj) {
  std::ofstream out = open_out(path);
  out << "step,potential,u_sn\n";
  for (std::size_t k = 0; k < traj.potential.size(); ++k) {
    out << k << ',' << num(traj.potential[k]) << ',' << num(traj.potential_sn[k]) << '\n';
  }
}

void write_trace_csv(const fs::path& path, const std::vector<double>& trace) {
  std::ofstream out = open_out(path);
  out << "iteration,nll\n";
  for (std::size_t k = 0; k < trace.size(); ++k) out << k + 1 << ',' << num(trace[k]) << '\n';
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_manifest(const fs::path& dir, const Manifest& m) {
  write_json(dir / "manifest.json", Json{{"command", m.command},
                                         {"config_hash", m.config_hash},
                                         {"inputs", m.inputs},
                                         {"seeds", m.seeds},
                                         {"artifacts", m.artifacts}});
}

Manifest read_manifest(const fs::path& dir) {
  const Json j = read_json(dir / "manifest.json");
  Manifest m;
  m.command = j.at("command").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.inputs = j.at("inputs");
  m.seeds = j.at("seeds");
  m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
  return m;
}

}  // namespace snmm::io
