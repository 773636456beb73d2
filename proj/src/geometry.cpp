#include "snmm/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace snmm {

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

Mat2 rotation(double theta) {
  Mat2 r;
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return r;
}

DistanceQuery circle_query(const Circle& c, const Vec2& p) {
  const Vec2 d = p - c.center;
  const double n = d.norm();
  const Vec2 dir = n > 0.0 ? Vec2(d / n) : Vec2(1.0, 0.0);
  return {n - c.radius, dir};
}

bool polygon_contains(const ConvexPolygon& poly, const Vec2& p) {
  const auto& v = poly.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2& a = v[i];
    const Vec2& b = v[(i + 1) % v.size()];
    if (cross(b - a, p - a) < 0.0) return false;
  }
  return true;
}

DistanceQuery polygon_query(const ConvexPolygon& poly, const Vec2& p) {
  const auto& v = poly.vertices;
  double best = std::numeric_limits<double>::infinity();
  Vec2 closest = v.front();
  Vec2 edge_normal(1.0, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2& a = v[i];
    const Vec2& b = v[(i + 1) % v.size()];
    const Vec2 e = b - a;
    const double t = std::clamp((p - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
    const Vec2 q = a + t * e;
    const double d = (p - q).norm();
    if (d < best) {
      best = d;
      closest = q;
      // outward normal of a CCW edge
      edge_normal = Vec2(e.y(), -e.x()).normalized();
    }
  }
  const bool inside = polygon_contains(poly, p);
  Vec2 grad = edge_normal;
  if (best > 1e-12) grad = inside ? Vec2((closest - p) / best) : Vec2((p - closest) / best);
  return {inside ? -best : best, grad};
}

DistanceQuery ellipse_query(const Ellipse& el, const Vec2& p) {
  const Mat2 r = rotation(el.rotation);
  const Vec2 local = r.transpose() * (p - el.center);
  const double a = el.semi_axes.x();
  const double b = el.semi_axes.y();
  const Vec2 cp = ellipse_closest_point(a, b, local);
  const double d = (local - cp).norm();
  const bool inside = (local.x() / a) * (local.x() / a) + (local.y() / b) * (local.y() / b) <= 1.0;
  Vec2 grad_local;
  if (d > 1e-12) {
    grad_local = inside ? Vec2((cp - local) / d) : Vec2((local - cp) / d);
  } else {
    grad_local = Vec2(cp.x() / (a * a), cp.y() / (b * b)).normalized();
  }
  return {inside ? -d : d, r * grad_local};
}

}  // namespace

Workspace::Workspace(double x_min, double x_max, double y_min, double y_max)
    : x_min_(x_min), x_max_(x_max), y_min_(y_min), y_max_(y_max) {
  if (!(x_min < x_max) || !(y_min < y_max)) {
    throw ConfigError("workspace bounds must satisfy x_min < x_max and y_min < y_max");
  }
}

double Workspace::diagonal() const { return std::hypot(width(), height()); }

bool Workspace::contains(const Vec2& p) const {
  return p.x() >= x_min_ && p.x() <= x_max_ && p.y() >= y_min_ && p.y() <= y_max_;
}

Vec2 Workspace::clamp(const Vec2& p) const {
  return {std::clamp(p.x(), x_min_, x_max_), std::clamp(p.y(), y_min_, y_max_)};
}

Vec2 ellipse_closest_point(double a, double b, const Vec2& p) {
  // Fold into the first quadrant; the closest point shares the quadrant.
  const double px = std::abs(p.x());
  const double py = std::abs(p.y());
  constexpr double kHalfPi = std::numbers::pi / 2.0;

  auto point = [&](double t) { return Vec2(a * std::cos(t), b * std::sin(t)); };
  auto objective = [&](double t) { return 0.5 * (point(t) - Vec2(px, py)).squaredNorm(); };

  auto newton = [&](double t) {
    double f = objective(t);
    for (int iter = 0; iter < 50; ++iter) {
      const Vec2 e = point(t);
      const Vec2 de(-a * std::sin(t), b * std::cos(t));
      const Vec2 r = e - Vec2(px, py);
      const double g = r.dot(de);
      double h = de.squaredNorm() - r.dot(e);
      if (h <= 1e-14) h = de.squaredNorm();
      double step = -g / h;
      double t_new = std::clamp(t + step, 0.0, kHalfPi);
      double f_new = objective(t_new);
      int halvings = 0;
      while (f_new > f && halvings < 30) {
        step *= 0.5;
        t_new = std::clamp(t + step, 0.0, kHalfPi);
        f_new = objective(t_new);
        ++halvings;
      }
      const double moved = std::abs(t_new - t);
      if (f_new <= f) {
        t = t_new;
        f = f_new;
      }
      if (moved < 1e-9) break;
    }
    return std::pair{t, f};
  };

  const std::array<double, 4> starts{std::atan2(a * py, b * px), 0.0, kHalfPi / 2.0, kHalfPi};
  double best_t = 0.0;
  double best_f = std::numeric_limits<double>::infinity();
  for (double s : starts) {
    const auto [t, f] = newton(s);
    if (f < best_f) {
      best_f = f;
      best_t = t;
    }
  }
  const Vec2 q = point(best_t);
  return {std::copysign(q.x(), p.x()), std::copysign(q.y(), p.y())};
}

Obstacle::Obstacle(Shape shape) : shape_(std::move(shape)) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Circle>) {
          if (!(s.radius > 0.0)) throw ConfigError("circle radius must be positive");
        } else if constexpr (std::is_same_v<T, ConvexPolygon>) {
          const auto& v = s.vertices;
          if (v.size() < 3) throw ConfigError("polygon needs at least 3 vertices");
          for (std::size_t i = 0; i < v.size(); ++i) {
            const Vec2& a = v[i];
            const Vec2& b = v[(i + 1) % v.size()];
            const Vec2& c = v[(i + 2) % v.size()];
            if (cross(b - a, c - b) <= 0.0) {
              throw ConfigError("polygon must be convex and counter-clockwise");
            }
          }
        } else {
          if (!(s.semi_axes.x() > 0.0) || !(s.semi_axes.y() > 0.0)) {
            throw ConfigError("ellipse semi-axes must be positive");
          }
        }
      },
      shape_);
}

Obstacle Obstacle::circle(Vec2 center, double radius) { return Obstacle(Circle{center, radius}); }

Obstacle Obstacle::polygon(std::vector<Vec2> vertices) {
  return Obstacle(ConvexPolygon{std::move(vertices)});
}

Obstacle Obstacle::rectangle(double x0, double y0, double x1, double y1) {
  return polygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

Obstacle Obstacle::ellipse(Vec2 center, Vec2 semi_axes, double rotation) {
  return Obstacle(Ellipse{center, semi_axes, rotation});
}

bool Obstacle::contains(const Vec2& p) const {
  return std::visit(
      [&](const auto& s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Circle>) {
          return (p - s.center).squaredNorm() <= s.radius * s.radius;
        } else if constexpr (std::is_same_v<T, ConvexPolygon>) {
          return polygon_contains(s, p);
        } else {
          const Vec2 local = rotation(s.rotation).transpose() * (p - s.center);
          const double u = local.x() / s.semi_axes.x();
          const double v = local.y() / s.semi_axes.y();
          return u * u + v * v <= 1.0;
        }
      },
      shape_);
}

DistanceQuery Obstacle::distance_query(const Vec2& p) const {
  return std::visit(
      [&](const auto& s) -> DistanceQuery {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Circle>) {
          return circle_query(s, p);
        } else if constexpr (std::is_same_v<T, ConvexPolygon>) {
          return polygon_query(s, p);
        } else {
          return ellipse_query(s, p);
        }
      },
      shape_);
}

double Obstacle::area() const {
  return std::visit(
      [](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Circle>) {
          return std::numbers::pi * s.radius * s.radius;
        } else if constexpr (std::is_same_v<T, ConvexPolygon>) {
          double twice = 0.0;
          for (std::size_t i = 0; i < s.vertices.size(); ++i) {
            twice += cross(s.vertices[i], s.vertices[(i + 1) % s.vertices.size()]);
          }
          return 0.5 * twice;
        } else {
          return std::numbers::pi * s.semi_axes.x() * s.semi_axes.y();
        }
      },
      shape_);
}

SkewField::SkewField(Workspace workspace, std::vector<Obstacle> obstacles)
    : workspace_(workspace), obstacles_(std::move(obstacles)) {}

void SkewField::require_inside(const Vec2& x) const {
  if (!workspace_.contains(x)) {
    std::ostringstream os;
    os << "point (" << x.x() << ", " << x.y() << ") lies outside the workspace";
    throw DomainError(os.str());
  }
}

int SkewField::occupancy(const Vec2& x) const {
  require_inside(x);
  for (const auto& o : obstacles_) {
    if (o.contains(x)) return 0;
  }
  return 1;
}

bool SkewField::is_free(const Vec2& x) const {
  if (!workspace_.contains(x)) return false;
  for (const auto& o : obstacles_) {
    if (o.contains(x)) return false;
  }
  return true;
}

double SkewField::clearance(const Vec2& x) const { return clearance_query(x).distance; }

DistanceQuery SkewField::clearance_query(const Vec2& x) const {
  require_inside(x);
  DistanceQuery best{std::numeric_limits<double>::infinity(), Vec2::Zero()};
  for (const auto& o : obstacles_) {
    const DistanceQuery q = o.distance_query(x);
    if (q.distance < best.distance) best = q;
  }
  return best;
}

}  // namespace snmm
