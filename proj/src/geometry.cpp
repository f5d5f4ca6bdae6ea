// SPDX-License-Identifier: Apache-2.0

#include "equikit/geometry.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace equikit::geo {

std::vector<int> rotated_nms(const std::vector<OrientedBox>& boxes,
                             const std::vector<double>& scores, double iou_thresh) {
  if (boxes.size() != scores.size())
    throw std::invalid_argument("rotated_nms: scores length must match boxes");
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  std::vector<Polygon<double>> polys;
  polys.reserve(boxes.size());
  for (const auto& b : boxes) polys.push_back(b.polygon());

  std::vector<char> suppressed(boxes.size(), 0);
  std::vector<int> keep;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int a = order[i];
    if (suppressed[a]) continue;
    keep.push_back(a);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const int b = order[j];
      if (suppressed[b]) continue;
      if (polygon_iou(polys[a], polys[b]) >= iou_thresh) suppressed[b] = 1;
    }
  }
  return keep;
}

OrientedBox rotate_box(const OrientedBox& box, double angle, int h, int w) {
  const double cx = (w - 1) * 0.5, cy = (h - 1) * 0.5;
  const double c = std::cos(angle), s = std::sin(angle);
  OrientedBox out;
  for (int i = 0; i < 4; ++i) {
    const double u = box.corners[i].x - cx;
    const double v = box.corners[i].y - cy;
    out.corners[i] = {cx + c * u + s * v, cy - s * u + c * v};
  }
  return out;  // the map has determinant +1, winding is preserved
}

OrientedBox box_from_center(double cx, double cy, double width, double height, double angle) {
  // Local frame: u along the box width at `angle`, v perpendicular. Corner
  // order chosen so the shoelace sum is positive.
  const double c = std::cos(angle), s = std::sin(angle);
  const double ux = c * width * 0.5, uy = -s * width * 0.5;
  const double vx = s * height * 0.5, vy = c * height * 0.5;
  OrientedBox box;
  box.corners[0] = {cx - ux - vx, cy - uy - vy};
  box.corners[1] = {cx + ux - vx, cy + uy - vy};
  box.corners[2] = {cx + ux + vx, cy + uy + vy};
  box.corners[3] = {cx - ux + vx, cy - uy + vy};
  return box;
}

std::string obb_to_line(const LabeledBox& lb) {
  std::ostringstream os;
  os.precision(17);
  for (int i = 0; i < 4; ++i) os << lb.box.corners[i].x << " " << lb.box.corners[i].y << " ";
  os << lb.class_id;
  if (lb.score >= 0.0) os << " " << lb.score;
  return os.str();
}

LabeledBox obb_from_line(const std::string& line) {
  std::istringstream is(line);
  LabeledBox lb;
  for (int i = 0; i < 4; ++i) {
    if (!(is >> lb.box.corners[i].x >> lb.box.corners[i].y))
      throw std::runtime_error("obb line: expected 8 coordinates");
  }
  if (!(is >> lb.class_id)) throw std::runtime_error("obb line: expected class id");
  double s;
  if (is >> s) lb.score = s;
  return lb;
}

void write_obb_file(const std::string& path, const std::vector<LabeledBox>& boxes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& b : boxes) out << obb_to_line(b) << "\n";
}

std::vector<LabeledBox> read_obb_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<LabeledBox> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(obb_from_line(line));
  }
  return out;
}

}  // namespace equikit::geo
