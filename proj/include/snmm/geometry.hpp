#pragma once

#include <variant>
#include <vector>

#include "snmm/types.hpp"

namespace snmm {

/// Axis-aligned rectangular workspace.
class Workspace {
 public:
  Workspace() : Workspace(0.0, 20.0, 0.0, 20.0) {}
  Workspace(double x_min, double x_max, double y_min, double y_max);

  double x_min() const { return x_min_; }
  double x_max() const { return x_max_; }
  double y_min() const { return y_min_; }
  double y_max() const { return y_max_; }
  double width() const { return x_max_ - x_min_; }
  double height() const { return y_max_ - y_min_; }
  double area() const { return width() * height(); }
  double diagonal() const;

  bool contains(const Vec2& p) const;
  Vec2 clamp(const Vec2& p) const;

  bool operator==(const Workspace&) const = default;

 private:
  double x_min_, x_max_, y_min_, y_max_;
};

struct Circle {
  Vec2 center;
  double radius;
};

/// Counter-clockwise convex polygon.
struct ConvexPolygon {
  std::vector<Vec2> vertices;
};

struct Ellipse {
  Vec2 center;
  Vec2 semi_axes;
  double rotation;  // radians, counter-clockwise
};

/// Signed distance to a shape boundary and its spatial gradient.
struct DistanceQuery {
  double distance;  // > 0 outside, < 0 inside
  Vec2 gradient;    // unit vector pointing toward increasing distance
};

class Obstacle {
 public:
  using Shape = std::variant<Circle, ConvexPolygon, Ellipse>;

  explicit Obstacle(Shape shape);

  static Obstacle circle(Vec2 center, double radius);
  static Obstacle polygon(std::vector<Vec2> vertices);
  static Obstacle rectangle(double x0, double y0, double x1, double y1);
  static Obstacle ellipse(Vec2 center, Vec2 semi_axes, double rotation);

  const Shape& shape() const { return shape_; }

  /// Inside or on the boundary.
  bool contains(const Vec2& p) const;
  double signed_distance(const Vec2& p) const { return distance_query(p).distance; }
  DistanceQuery distance_query(const Vec2& p) const;
  double area() const;

 private:
  Shape shape_;
};

/// Closest boundary point of an axis-aligned ellipse (semi-axes a, b) to p,
/// both in the ellipse frame. Damped Newton on the boundary angle.
Vec2 ellipse_closest_point(double a, double b, const Vec2& p);

/// Binary skewing function over a workspace: Q(x) = 0 inside any obstacle.
class SkewField {
 public:
  SkewField() = default;
  SkewField(Workspace workspace, std::vector<Obstacle> obstacles);

  const Workspace& workspace() const { return workspace_; }
  const std::vector<Obstacle>& obstacles() const { return obstacles_; }
  bool all_free() const { return obstacles_.empty(); }

  /// Q(x) in {0, 1}. Throws DomainError outside the workspace.
  int occupancy(const Vec2& x) const;
  /// Like occupancy(), but points outside the workspace count as blocked.
  bool is_free(const Vec2& x) const;

  /// Signed distance to the nearest obstacle boundary; +infinity when the
  /// field has no obstacles. Throws DomainError outside the workspace.
  double clearance(const Vec2& x) const;
  DistanceQuery clearance_query(const Vec2& x) const;

  /// Copy of this field with the obstacles removed (Q == 1 everywhere).
  SkewField free_space() const { return SkewField(workspace_, {}); }

 private:
  void require_inside(const Vec2& x) const;

  Workspace workspace_;
  std::vector<Obstacle> obstacles_;
};

}  // namespace snmm
