// SPDX-License-Identifier: Apache-2.0
//
// Computational geometry for point sets and oriented boxes: convex hull,
// area centroid, minimum-area enclosing rectangle, convex polygon IoU/GIoU,
// edge midpoints, the edge-constraint distance and rotated NMS.
//
// Everything geometric is templated on the scalar so the same code runs on
// doubles (decode, NMS, oracles) and on geo::Dual (training losses with
// exact gradients). Branch decisions always compare values only.
//
// Polygons are vertex lists in counter-clockwise order, meaning positive
// shoelace sum in (x, y) coordinates. Degenerate inputs (collinear point
// sets, zero-area polygons) raise std::domain_error.

#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "equikit/dual.hpp"

namespace equikit::geo {

template <class T>
struct Vec2 {
  T x{}, y{};
};

template <class T>
Vec2<T> operator+(const Vec2<T>& a, const Vec2<T>& b) { return {a.x + b.x, a.y + b.y}; }
template <class T>
Vec2<T> operator-(const Vec2<T>& a, const Vec2<T>& b) { return {a.x - b.x, a.y - b.y}; }
template <class T>
Vec2<T> operator*(const T& s, const Vec2<T>& a) { return {s * a.x, s * a.y}; }

template <class T>
T dot(const Vec2<T>& a, const Vec2<T>& b) { return a.x * b.x + a.y * b.y; }
template <class T>
T cross(const Vec2<T>& a, const Vec2<T>& b) { return a.x * b.y - a.y * b.x; }
template <class T>
T norm(const Vec2<T>& a) { return sqrt(dot(a, a)); }

template <class T>
using Polygon = std::vector<Vec2<T>>;

template <class T>
struct OrientedBoxT {
  std::array<Vec2<T>, 4> corners;  // CCW

  Vec2<T> center() const {
    const T quarter = T(0.25);
    return {quarter * (corners[0].x + corners[1].x + corners[2].x + corners[3].x),
            quarter * (corners[0].y + corners[1].y + corners[2].y + corners[3].y)};
  }
  std::array<Vec2<T>, 4> edge_midpoints() const {
    const T half = T(0.5);
    std::array<Vec2<T>, 4> mids;
    for (int i = 0; i < 4; ++i) {
      const auto& a = corners[i];
      const auto& b = corners[(i + 1) % 4];
      mids[i] = {half * (a.x + b.x), half * (a.y + b.y)};
    }
    return mids;
  }
  Polygon<T> polygon() const { return {corners[0], corners[1], corners[2], corners[3]}; }
};

using OrientedBox = OrientedBoxT<double>;

// --- Areas and predicates ----------------------------------------------------

template <class T>
T polygon_area(const Polygon<T>& poly) {
  T a = T(0.0);
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return T(0.5) * a;
}

template <class T>
bool is_convex_ccw(const Polygon<T>& poly, double tol = 1e-9) {
  if (poly.size() < 3) return false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    const auto& c = poly[(i + 2) % n];
    if (value_of(cross(b - a, c - b)) < -tol) return false;
  }
  return value_of(polygon_area(poly)) > 0.0;
}

template <class T>
bool point_in_convex(const Vec2<T>& p, const Polygon<T>& poly) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (value_of(cross(poly[(i + 1) % n] - poly[i], p - poly[i])) < 0.0) return false;
  }
  return true;
}

// --- Convex hull (Andrew monotone chain) -------------------------------------

/// CCW hull with collinear boundary points dropped. Throws std::domain_error
/// when all points are collinear.
template <class T>
Polygon<T> convex_hull(const std::vector<Vec2<T>>& points) {
  if (points.size() < 3) throw std::domain_error("convex_hull: need at least 3 points");
  std::vector<Vec2<T>> pts = points;
  std::sort(pts.begin(), pts.end(), [](const Vec2<T>& a, const Vec2<T>& b) {
    const double ax = value_of(a.x), bx = value_of(b.x);
    if (ax != bx) return ax < bx;
    return value_of(a.y) < value_of(b.y);
  });

  const std::size_t n = pts.size();
  std::vector<Vec2<T>> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {  // lower chain
    while (k >= 2 && value_of(cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2])) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = n - 1; i-- > 0;) {  // upper chain
    while (k >= lower && value_of(cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2])) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) throw std::domain_error("convex_hull: degenerate (collinear) point set");
  return hull;
}

/// Area centroid by the shoelace decomposition. Differentiable in the
/// vertices; throws std::domain_error on (near-)zero area.
template <class T>
Vec2<T> hull_center(const Polygon<T>& poly) {
  if (poly.size() < 3) throw std::domain_error("hull_center: not a polygon");
  const T area = polygon_area(poly);
  if (std::abs(value_of(area)) < 1e-12) throw std::domain_error("hull_center: zero-area polygon");
  T cx = T(0.0), cy = T(0.0);
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    const T w = p.x * q.y - q.x * p.y;
    cx += (p.x + q.x) * w;
    cy += (p.y + q.y) * w;
  }
  const T inv = T(1.0) / (T(6.0) * area);
  return {cx * inv, cy * inv};
}

// --- Minimum-area enclosing rectangle (rotating calipers) --------------------

/// One output edge is collinear with some hull edge; ties pick the first
/// minimizing edge, so the result is deterministic and piecewise smooth.
template <class T>
OrientedBoxT<T> min_area_rect(const Polygon<T>& hull) {
  if (hull.size() < 3) throw std::domain_error("min_area_rect: degenerate polygon");
  const std::size_t n = hull.size();
  bool have_best = false;
  double best_area = 0.0;
  std::size_t best_edge = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2<T> e = hull[(i + 1) % n] - hull[i];
    const double len = value_of(norm(e));
    if (len < 1e-12) continue;
    double min_d = 0.0, max_d = 0.0, min_n = 0.0, max_n = 0.0;
    const double ex = value_of(e.x) / len, ey = value_of(e.y) / len;
    for (std::size_t j = 0; j < n; ++j) {
      const double px = value_of(hull[j].x) - value_of(hull[i].x);
      const double py = value_of(hull[j].y) - value_of(hull[i].y);
      const double d = px * ex + py * ey;
      const double m = -px * ey + py * ex;
      if (j == 0) {
        min_d = max_d = d;
        min_n = max_n = m;
      } else {
        min_d = std::min(min_d, d);
        max_d = std::max(max_d, d);
        min_n = std::min(min_n, m);
        max_n = std::max(max_n, m);
      }
    }
    const double area = (max_d - min_d) * (max_n - min_n);
    if (!have_best || area < best_area) {
      have_best = true;
      best_area = area;
      best_edge = i;
    }
  }
  if (!have_best) throw std::domain_error("min_area_rect: degenerate polygon");

  // Recompute extents for the chosen edge in the differentiable scalar type;
  // the edge choice and the support vertices are locally constant.
  const Vec2<T> e = hull[(best_edge + 1) % n] - hull[best_edge];
  const T len = norm(e);
  const Vec2<T> dir{e.x / len, e.y / len};
  const Vec2<T> nrm{-dir.y, dir.x};
  T min_d, max_d, min_n, max_n;
  for (std::size_t j = 0; j < n; ++j) {
    const Vec2<T> r = hull[j] - hull[best_edge];
    const T d = dot(r, dir);
    const T m = dot(r, nrm);
    if (j == 0) {
      min_d = max_d = d;
      min_n = max_n = m;
    } else {
      if (d < min_d) min_d = d;
      if (d > max_d) max_d = d;
      if (m < min_n) min_n = m;
      if (m > max_n) max_n = m;
    }
  }
  const Vec2<T>& o = hull[best_edge];
  OrientedBoxT<T> box;
  box.corners[0] = o + min_d * dir + min_n * nrm;
  box.corners[1] = o + max_d * dir + min_n * nrm;
  box.corners[2] = o + max_d * dir + max_n * nrm;
  box.corners[3] = o + min_d * dir + max_n * nrm;
  return box;
}

// --- Convex polygon intersection / IoU / GIoU --------------------------------

/// Sutherland-Hodgman clip of a convex subject against a convex CCW clip
/// polygon. Vertex-on-edge ties take the clipped branch.
template <class T>
Polygon<T> clip_convex(const Polygon<T>& subject, const Polygon<T>& clip) {
  Polygon<T> output = subject;
  const std::size_t nc = clip.size();
  for (std::size_t i = 0; i < nc && !output.empty(); ++i) {
    const Vec2<T>& a = clip[i];
    const Vec2<T>& b = clip[(i + 1) % nc];
    const Vec2<T> edge = b - a;
    Polygon<T> input;
    input.swap(output);
    const std::size_t ni = input.size();
    for (std::size_t j = 0; j < ni; ++j) {
      const Vec2<T>& s = input[j];
      const Vec2<T>& e = input[(j + 1) % ni];
      const T cs = cross(edge, s - a);
      const T ce = cross(edge, e - a);
      const bool s_in = value_of(cs) > 0.0;
      const bool e_in = value_of(ce) > 0.0;
      if (s_in) output.push_back(s);
      if (s_in != e_in) {
        const T t = cs / (cs - ce);
        output.push_back({s.x + t * (e.x - s.x), s.y + t * (e.y - s.y)});
      }
    }
  }
  return output;
}

template <class T>
T intersection_area(const Polygon<T>& a, const Polygon<T>& b) {
  const Polygon<T> inter = clip_convex(a, b);
  if (inter.size() < 3) return T(0.0);
  return polygon_area(inter);
}

template <class T>
void require_convex(const Polygon<T>& p, const char* who) {
  if (!is_convex_ccw(p))
    throw std::invalid_argument(std::string(who) + ": polygon must be convex and CCW");
}

template <class T>
T polygon_iou(const Polygon<T>& a, const Polygon<T>& b) {
  require_convex(a, "polygon_iou");
  require_convex(b, "polygon_iou");
  const T inter = intersection_area(a, b);
  const T uni = polygon_area(a) + polygon_area(b) - inter;
  if (value_of(uni) <= 0.0) return T(0.0);
  return inter / uni;
}

/// GIoU with the enclosing region C taken as the minimum-area rotated
/// rectangle of the joint hull, so the penalty term is rotation-covariant
/// like everything else in the pipeline.
template <class T>
T giou(const Polygon<T>& a, const Polygon<T>& b) {
  require_convex(a, "giou");
  require_convex(b, "giou");
  const T inter = intersection_area(a, b);
  const T uni = polygon_area(a) + polygon_area(b) - inter;
  std::vector<Vec2<T>> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  const Polygon<T> joint = convex_hull(all);
  const T enclosing = polygon_area(min_area_rect(joint).polygon());
  return inter / uni - (enclosing - uni) / enclosing;
}

/// Distance from a reference point to the nearest ground-truth edge midpoint
/// (ties: lowest edge index). Zero iff the point sits on a midpoint; the
/// gradient is the unit vector toward the chosen midpoint.
template <class T>
T edge_constraint(const Vec2<T>& ref, const OrientedBoxT<T>& gt) {
  const auto mids = gt.edge_midpoints();
  int best = 0;
  double best_d = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double dx = value_of(ref.x) - value_of(mids[i].x);
    const double dy = value_of(ref.y) - value_of(mids[i].y);
    const double d = dx * dx + dy * dy;
    if (i == 0 || d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return norm(ref - mids[best]);
}

// --- Double-only utilities ----------------------------------------------------

/// Greedy descending-score suppression with polygon IoU; returns kept indices.
/// Deterministic: score ties resolve by lower index first.
std::vector<int> rotated_nms(const std::vector<OrientedBox>& boxes,
                             const std::vector<double>& scores, double iou_thresh);

/// Box corners rotated by `angle` (radians, CCW) about the center of an
/// h-by-w canvas; matches the position map of rotate_image.
OrientedBox rotate_box(const OrientedBox& box, double angle, int h, int w);

OrientedBox box_from_center(double cx, double cy, double width, double height, double angle);

// OBB text format: one object per line,
//   x1 y1 x2 y2 x3 y3 x4 y4 class [score]
// (score present for predictions, absent for ground truth).
struct LabeledBox {
  OrientedBox box;
  int class_id = 0;
  double score = -1.0;  // < 0 means "no score given"
};

std::string obb_to_line(const LabeledBox& lb);
LabeledBox obb_from_line(const std::string& line);
void write_obb_file(const std::string& path, const std::vector<LabeledBox>& boxes);
std::vector<LabeledBox> read_obb_file(const std::string& path);

}  // namespace equikit::geo
