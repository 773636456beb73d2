#include "snmm/grid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>

#include "snmm/simd/kernels.hpp"

namespace snmm {

namespace {

std::atomic<std::uint64_t> next_grid_id{1};

bool close(const Vec2& a, const Vec2& b) { return (a - b).cwiseAbs().maxCoeff() <= 1e-12; }
bool close(const Mat2& a, const Mat2& b) { return (a - b).cwiseAbs().maxCoeff() <= 1e-12; }

}  // namespace

std::optional<double> NormalizerCache::find(const Vec2& mu, const Mat2& sigma) const {
  std::shared_lock lock(mutex_);
  for (const auto& e : entries_) {
    if (close(e.mu, mu) && close(e.sigma, sigma)) return e.value;
  }
  return std::nullopt;
}

void NormalizerCache::store(const Vec2& mu, const Mat2& sigma, double value) {
  std::unique_lock lock(mutex_);
  if (entries_.size() < capacity_) {
    entries_.push_back({mu, sigma, value});
    return;
  }
  entries_[next_] = {mu, sigma, value};
  next_ = (next_ + 1) % capacity_;
}

std::size_t NormalizerCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

QuadratureGrid::QuadratureGrid(SkewField field, double dx, double dy)
    : cache_(std::make_shared<NormalizerCache>()) {
  if (!(dx > 0.0) || !(dy > 0.0)) throw ConfigError("grid spacing must be positive");
  const Workspace& ws = field.workspace();
  if (dx >= ws.width() || dy >= ws.height()) {
    throw ConfigError("grid spacing must be smaller than the workspace extent");
  }
  auto data = std::make_shared<Data>();
  data->nx = static_cast<std::size_t>(std::max(1.0, std::round(ws.width() / dx)));
  data->ny = static_cast<std::size_t>(std::max(1.0, std::round(ws.height() / dy)));
  data->dx = ws.width() / static_cast<double>(data->nx);
  data->dy = ws.height() / static_cast<double>(data->ny);
  const std::size_t m = data->nx * data->ny;
  data->xs.resize(m);
  data->ys.resize(m);
  data->q.resize(m);
  data->ones.assign(m, 1.0);
  data->blocked.resize(m);
  for (std::size_t iy = 0; iy < data->ny; ++iy) {
    const double y = ws.y_min() + (static_cast<double>(iy) + 0.5) * data->dy;
    for (std::size_t ix = 0; ix < data->nx; ++ix) {
      const std::size_t j = iy * data->nx + ix;
      data->xs[j] = ws.x_min() + (static_cast<double>(ix) + 0.5) * data->dx;
      data->ys[j] = y;
      data->q[j] = field.is_free({data->xs[j], y}) ? 1.0 : 0.0;
      data->blocked[j] = 1.0 - data->q[j];
    }
  }
  data->field = std::move(field);
  data->id = next_grid_id.fetch_add(1);
  data_ = std::move(data);
}

std::pair<std::size_t, std::size_t> QuadratureGrid::cell_of(const Vec2& p) const {
  const Workspace& ws = workspace();
  auto axis = [](double v, double lo, double step, std::size_t n) {
    const double f = std::floor((v - lo) / step);
    if (f < 0.0) return std::size_t{0};
    return std::min(static_cast<std::size_t>(f), n - 1);
  };
  return {axis(p.x(), ws.x_min(), data_->dx, data_->nx), axis(p.y(), ws.y_min(), data_->dy, data_->ny)};
}

double QuadratureGrid::integrate(std::span<const double> values) const {
  return simd::sum(values) * cell_area();
}

bool QuadratureGrid::same_lattice(const QuadratureGrid& other) const {
  return data_ == other.data_ ||
         (data_->nx == other.data_->nx && data_->ny == other.data_->ny &&
          data_->dx == other.data_->dx && data_->dy == other.data_->dy &&
          workspace() == other.workspace());
}

QuadratureGrid QuadratureGrid::free_space_twin() const {
  return QuadratureGrid(field().free_space(), data_->dx, data_->dy);
}

}  // namespace snmm
