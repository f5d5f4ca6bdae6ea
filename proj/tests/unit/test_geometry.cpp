// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "equikit/geometry.hpp"
#include "equikit/rng.hpp"
#include "equikit/tensor_ops.hpp"

using namespace equikit;
using namespace equikit::geo;

namespace {

constexpr double kPi = 3.14159265358979323846;

using P = Vec2<double>;

// O(n^3) hull oracle: a point is a hull vertex iff it is not strictly inside
// the hull, i.e. there exists a line through it with all points on one side.
std::vector<P> brute_force_hull(const std::vector<P>& pts) {
  std::vector<P> verts;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool extreme = false;
    for (std::size_t j = 0; j < pts.size() && !extreme; ++j) {
      if (j == i) continue;
      for (std::size_t k = 0; k < pts.size() && !extreme; ++k) {
        if (k == i || k == j) continue;
        // direction candidates: edges through i
        const P d = pts[j] - pts[i];
        bool all_left = true, all_right = true;
        for (std::size_t m = 0; m < pts.size(); ++m) {
          const double c = cross(d, pts[m] - pts[i]);
          if (c > 1e-12) all_right = false;
          if (c < -1e-12) all_left = false;
        }
        if (all_left || all_right) extreme = true;
        (void)k;
      }
    }
    if (extreme) verts.push_back(pts[i]);
  }
  return verts;
}

Polygon<double> random_convex(Rng& rng, int max_pts = 10) {
  std::vector<P> pts;
  const int n = 4 + rng.uniform_int(max_pts - 3);
  for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5)});
  return convex_hull(pts);
}

double mc_area_overlap(Rng& rng, const Polygon<double>& a, const Polygon<double>& b, int samples,
                       double lo, double hi) {
  int inside = 0;
  for (int i = 0; i < samples; ++i) {
    const P p{rng.uniform(lo, hi), rng.uniform(lo, hi)};
    if (point_in_convex(p, a) && point_in_convex(p, b)) ++inside;
  }
  return (hi - lo) * (hi - lo) * inside / samples;
}

}  // namespace

TEST_CASE("convex_hull basic examples") {
  std::vector<P> sq = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
  auto hull = convex_hull(sq);
  CHECK(hull.size() == 4);
  CHECK(polygon_area(hull) == doctest::Approx(1.0));

  std::vector<P> tri = {{0, 0}, {2, 0}, {1, 2}};
  CHECK(convex_hull(tri).size() == 3);

  std::vector<P> line = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  CHECK_THROWS_AS(convex_hull(line), std::domain_error);
}

TEST_CASE("convex_hull matches the brute-force oracle on random sets") {
  Rng rng(221);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<P> pts;
    for (int i = 0; i < 50; ++i) pts.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10)});
    auto hull = convex_hull(pts);
    CHECK(is_convex_ccw(hull));
    // every input point inside-or-on the hull
    for (const auto& p : pts) {
      bool ok = true;
      for (std::size_t i = 0; i < hull.size(); ++i)
        if (cross(hull[(i + 1) % hull.size()] - hull[i], p - hull[i]) < -1e-9) ok = false;
      CHECK(ok);
    }
    // hull vertices are a subset of the oracle's extreme points
    auto oracle = brute_force_hull(pts);
    for (const auto& v : hull) {
      bool found = false;
      for (const auto& o : oracle)
        if (std::abs(o.x - v.x) < 1e-12 && std::abs(o.y - v.y) < 1e-12) found = true;
      CHECK(found);
    }
    CHECK(hull.size() == oracle.size());
  }
}

TEST_CASE("hull_center examples and Monte-Carlo oracle") {
  Polygon<double> sq = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  auto c = hull_center(sq);
  CHECK(c.x == doctest::Approx(0.5));
  CHECK(c.y == doctest::Approx(0.5));

  Polygon<double> tri = {{0, 0}, {3, 0}, {0, 3}};
  // CCW by positive shoelace: (0,0),(3,0),(0,3) has area +4.5
  auto ct = hull_center(tri);
  CHECK(ct.x == doctest::Approx(1.0));
  CHECK(ct.y == doctest::Approx(1.0));

  Rng rng(223);
  auto poly = random_convex(rng);
  auto center = hull_center(poly);
  // Monte-Carlo centroid
  double sx = 0, sy = 0;
  int inside = 0;
  for (int i = 0; i < 1000000; ++i) {
    const P p{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    if (point_in_convex(p, poly)) {
      sx += p.x;
      sy += p.y;
      ++inside;
    }
  }
  CHECK(center.x == doctest::Approx(sx / inside).epsilon(1e-2));
  CHECK(center.y == doctest::Approx(sy / inside).epsilon(1e-2));

  Polygon<double> degenerate = {{0, 0}, {1, 0}, {2, 0}};
  CHECK_THROWS_AS(hull_center(degenerate), std::domain_error);
}

TEST_CASE("min_area_rect examples") {
  Polygon<double> sq = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  auto box = min_area_rect(sq);
  CHECK(polygon_area(box.polygon()) == doctest::Approx(1.0).epsilon(1e-12));

  // rotating the square does not change the optimal area
  Rng rng(227);
  const double a = kPi / 6.0;
  Polygon<double> rot;
  for (const auto& p : sq)
    rot.push_back({p.x * std::cos(a) - p.y * std::sin(a), p.x * std::sin(a) + p.y * std::cos(a)});
  CHECK(polygon_area(min_area_rect(rot).polygon()) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("min_area_rect matches the angle-sweep oracle") {
  Rng rng(229);
  for (int trial = 0; trial < 15; ++trial) {
    auto poly = random_convex(rng);
    const double got = polygon_area(min_area_rect(poly).polygon());
    // 0.1-degree exhaustive sweep
    double best = 1e300;
    for (double deg = 0.0; deg < 90.0; deg += 0.1) {
      const double t = deg * kPi / 180.0;
      double min_u = 1e300, max_u = -1e300, min_v = 1e300, max_v = -1e300;
      for (const auto& p : poly) {
        const double u = p.x * std::cos(t) + p.y * std::sin(t);
        const double v = -p.x * std::sin(t) + p.y * std::cos(t);
        min_u = std::min(min_u, u);
        max_u = std::max(max_u, u);
        min_v = std::min(min_v, v);
        max_v = std::max(max_v, v);
      }
      best = std::min(best, (max_u - min_u) * (max_v - min_v));
    }
    CHECK(got <= best * (1.0 + 1e-6));
    CHECK(got >= best * (1.0 - 2e-3));  // sweep resolution limits the oracle
    // enclosing and at least as large as the hull
    CHECK(got >= polygon_area(poly) - 1e-12);
  }
}

TEST_CASE("polygon_iou analytic and Monte-Carlo") {
  Polygon<double> a = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  CHECK(polygon_iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  Polygon<double> far = {{5, 5}, {6, 5}, {6, 6}, {5, 6}};
  CHECK(polygon_iou(a, far) == 0.0);

  Polygon<double> b = {{0.5, 0}, {1.5, 0}, {1.5, 1}, {0.5, 1}};
  const double iou = polygon_iou(a, b);
  CHECK(iou == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Rng rng(233);
  const double mc_i = mc_area_overlap(rng, a, b, 1000000, -0.5, 2.0);
  const double mc_iou = mc_i / (1.0 + 1.0 - mc_i);
  CHECK(iou == doctest::Approx(mc_iou).epsilon(2e-2));

  // symmetry
  Rng rng2(239);
  for (int t = 0; t < 10; ++t) {
    auto p = random_convex(rng2);
    auto q = random_convex(rng2);
    CHECK(std::abs(polygon_iou(p, q) - polygon_iou(q, p)) < 1e-12);
  }

  Polygon<double> bowtie = {{0, 0}, {1, 1}, {1, 0}, {0, 1}};
  CHECK_THROWS_AS(polygon_iou(a, bowtie), std::invalid_argument);
}

TEST_CASE("giou bounds and identity") {
  Rng rng(241);
  for (int t = 0; t < 10; ++t) {
    auto p = random_convex(rng);
    auto q = random_convex(rng);
    const double g = giou(p, q);
    CHECK(g <= polygon_iou(p, q) + 1e-12);
    CHECK(g >= -1.0 - 1e-12);
  }
  Polygon<double> sq = {{0, 0}, {2, 0}, {2, 1}, {0, 1}};
  CHECK(giou(sq, sq) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("edge_constraint examples and brute force") {
  OrientedBox gt = box_from_center(1.0, 1.0, 2.0, 2.0, 0.0);  // square (0,0)-(2,2)
  const auto mids = gt.edge_midpoints();

  // a midpoint itself gives zero
  CHECK(edge_constraint(mids[0], gt) == doctest::Approx(0.0));

  // ref (0.5, 0): nearest midpoint (1,0) at distance 0.5
  CHECK(edge_constraint(P{0.5, 0.0}, gt) == doctest::Approx(0.5));

  Rng rng(251);
  for (int t = 0; t < 50; ++t) {
    OrientedBox b = box_from_center(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(1, 5),
                                    rng.uniform(1, 5), rng.uniform(0, 2 * kPi));
    const P ref{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    double brute = 1e300;
    for (const auto& m : b.edge_midpoints())
      brute = std::min(brute, std::hypot(ref.x - m.x, ref.y - m.y));
    CHECK(edge_constraint(ref, b) == doctest::Approx(brute).epsilon(1e-12));
  }
}

TEST_CASE("rotated_nms examples and reference implementation") {
  OrientedBox b1 = box_from_center(0, 0, 2, 1, 0.3);
  std::vector<OrientedBox> same = {b1, b1};
  CHECK(rotated_nms(same, {0.9, 0.8}, 0.5) == std::vector<int>{0});

  std::vector<OrientedBox> apart = {box_from_center(0, 0, 2, 1, 0.1),
                                    box_from_center(10, 10, 2, 1, 0.4)};
  CHECK(rotated_nms(apart, {0.5, 0.9}, 0.5) == std::vector<int>{1, 0});

  Rng rng(257);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<OrientedBox> boxes;
    std::vector<double> scores;
    for (int i = 0; i < 20; ++i) {
      boxes.push_back(box_from_center(rng.uniform(0, 12), rng.uniform(0, 12), rng.uniform(2, 5),
                                      rng.uniform(1, 4), rng.uniform(0, 2 * kPi)));
      scores.push_back(rng.uniform(0, 1));
    }
    // reference: independent O(n^2) suppression
    std::vector<int> order(20);
    for (int i = 0; i < 20; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    });
    std::vector<int> ref_keep;
    std::vector<bool> dead(20, false);
    for (int oi : order) {
      if (dead[oi]) continue;
      ref_keep.push_back(oi);
      for (int oj : order)
        if (!dead[oj] && oj != oi &&
            polygon_iou(boxes[oi].polygon(), boxes[oj].polygon()) >= 0.5)
          dead[oj] = true;
    }
    CHECK(rotated_nms(boxes, scores, 0.5) == ref_keep);
  }
}

TEST_CASE("rotation covariance of the geometry stack") {
  Rng rng(263);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<P> pts;
    for (int i = 0; i < 9; ++i) pts.push_back({rng.uniform(2, 28), rng.uniform(2, 28)});
    const int h = 31, w = 31;
    auto rot_pt = [&](const P& p) {
      double x, y;
      equikit::rotate_position(p.x, p.y, kPi / 2.0, h, w, x, y);
      return P{x, y};
    };
    std::vector<P> pts_rot;
    for (const auto& p : pts) pts_rot.push_back(rot_pt(p));

    auto hull = convex_hull(pts);
    auto hull_rot = convex_hull(pts_rot);
    CHECK(std::abs(polygon_area(hull) - polygon_area(hull_rot)) < 1e-9);

    auto c = hull_center(hull);
    auto c_rot = hull_center(hull_rot);
    const P expect = rot_pt(c);
    CHECK(c_rot.x == doctest::Approx(expect.x).epsilon(1e-9));
    CHECK(c_rot.y == doctest::Approx(expect.y).epsilon(1e-9));

    const double area = polygon_area(min_area_rect(hull).polygon());
    const double area_rot = polygon_area(min_area_rect(hull_rot).polygon());
    CHECK(area == doctest::Approx(area_rot).epsilon(1e-9));
  }
}

TEST_CASE("min_area_rect equals hull area iff the hull is a rectangle") {
  Polygon<double> rect = {{0, 0}, {3, 0}, {3, 1}, {0, 1}};
  CHECK(polygon_area(min_area_rect(rect).polygon()) == doctest::Approx(polygon_area(rect)));
  Polygon<double> tri = {{0, 0}, {2, 0}, {1, 1.5}};
  CHECK(polygon_area(min_area_rect(tri).polygon()) > polygon_area(tri) + 1e-9);
}

TEST_CASE("obb text format round trip") {
  LabeledBox lb{box_from_center(3.25, 4.5, 5.0, 2.0, 0.7), 2, 0.875};
  LabeledBox back = obb_from_line(obb_to_line(lb));
  CHECK(back.class_id == 2);
  CHECK(back.score == doctest::Approx(0.875));
  for (int i = 0; i < 4; ++i) {
    CHECK(back.box.corners[i].x == doctest::Approx(lb.box.corners[i].x).epsilon(1e-15));
    CHECK(back.box.corners[i].y == doctest::Approx(lb.box.corners[i].y).epsilon(1e-15));
  }
  LabeledBox gt{box_from_center(1, 1, 2, 1, 0.1), 1, -1.0};
  LabeledBox gt_back = obb_from_line(obb_to_line(gt));
  CHECK(gt_back.score < 0.0);  // ground truth carries no score
}
