#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <vector>

#include "snmm/geometry.hpp"

namespace snmm {

struct SNComponent;

/// Memo of skew normalizers E[Q(X)] keyed by component parameters. Entries
/// match when every mean and covariance entry agrees within 1e-12.
class NormalizerCache {
 public:
  explicit NormalizerCache(std::size_t capacity = 256) : capacity_(capacity) {}

  std::optional<double> find(const Vec2& mu, const Mat2& sigma) const;
  void store(const Vec2& mu, const Mat2& sigma, double value);
  std::size_t size() const;

 private:
  struct Entry {
    Vec2 mu;
    Mat2 sigma;
    double value;
  };
  mutable std::shared_mutex mutex_;
  std::vector<Entry> entries_;
  std::size_t next_ = 0;
  std::size_t capacity_;
};

/// Regular lattice of cell-center points covering the workspace, with the
/// skewing function cached at every point. Points are stored row-major
/// (x fastest) as separate x/y arrays. The spacing is adjusted so an integer
/// number of cells tiles each axis exactly.
class QuadratureGrid {
 public:
  QuadratureGrid(SkewField field, double dx, double dy);

  const SkewField& field() const { return data_->field; }
  const Workspace& workspace() const { return data_->field.workspace(); }
  std::size_t size() const { return data_->xs.size(); }
  std::size_t nx() const { return data_->nx; }
  std::size_t ny() const { return data_->ny; }
  double dx() const { return data_->dx; }
  double dy() const { return data_->dy; }
  double cell_area() const { return data_->dx * data_->dy; }
  bool all_free() const { return data_->field.all_free(); }

  std::span<const double> xs() const { return data_->xs; }
  std::span<const double> ys() const { return data_->ys; }
  /// Q at every point (0.0 or 1.0).
  std::span<const double> q() const { return data_->q; }
  /// Vector of ones; weights for unskewed integrals.
  std::span<const double> ones() const { return data_->ones; }
  /// 1 - Q at every point.
  std::span<const double> blocked() const { return data_->blocked; }

  Vec2 point(std::size_t j) const { return {data_->xs[j], data_->ys[j]}; }
  std::size_t index(std::size_t ix, std::size_t iy) const { return iy * data_->nx + ix; }
  /// Lattice cell containing p (clamped to the grid).
  std::pair<std::size_t, std::size_t> cell_of(const Vec2& p) const;

  /// sum_j values[j] * dx * dy
  double integrate(std::span<const double> values) const;

  /// Same lattice with the obstacles removed (shares nothing with this grid).
  QuadratureGrid free_space_twin() const;

  /// Same points in the same order (obstacles may differ).
  bool same_lattice(const QuadratureGrid& other) const;
  std::uint64_t id() const { return data_->id; }

  NormalizerCache& normalizer_cache() const { return *cache_; }

 private:
  struct Data {
    SkewField field;
    std::size_t nx = 0, ny = 0;
    double dx = 0.0, dy = 0.0;
    std::vector<double> xs, ys, q, ones, blocked;
    std::uint64_t id = 0;
  };
  std::shared_ptr<const Data> data_;
  std::shared_ptr<NormalizerCache> cache_;
};

}  // namespace snmm
