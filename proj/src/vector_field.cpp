// SPDX-License-Identifier: Apache-2.0

#include "equikit/vector_field.hpp"

#include <cmath>

namespace equikit {

namespace {
constexpr double kTwoPi = 6.28318530717958647692;
}

void unit_direction(int g_index, int group_order, double& c, double& s) {
  const CyclicGroup group(group_order);
  const int g = group.norm(g_index);
  if (group.is_quarter_turn(g)) {
    static const double table_c[4] = {1.0, 0.0, -1.0, 0.0};
    static const double table_s[4] = {0.0, 1.0, 0.0, -1.0};
    const int q = static_cast<int>((4LL * g / group_order) % 4);
    c = table_c[q];
    s = table_s[q];
    return;
  }
  const double a = kTwoPi * g / group_order;
  c = std::cos(a);
  s = std::sin(a);
}

VectorField to_vector_field(const GroupFeature& feat) {
  const int k = feat.channels(), n = feat.order(), h = feat.height(), w = feat.width();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;

  // cos/sin per orientation index, quarter turns exact
  std::vector<double> dir_c(n), dir_s(n);
  for (int ni = 0; ni < n; ++ni) unit_direction(ni, n, dir_c[ni], dir_s[ni]);

  Tensor out({k, 2, h, w});
  std::vector<int> argmax(static_cast<std::size_t>(k) * hw);
  const double* f = feat.tensor.data();
  double* o = out.data();
  for (int ki = 0; ki < k; ++ki) {
    for (std::int64_t p = 0; p < hw; ++p) {
      double best = f[(static_cast<std::int64_t>(ki) * n) * hw + p];
      int best_n = 0;
      for (int ni = 1; ni < n; ++ni) {
        const double v = f[(static_cast<std::int64_t>(ki) * n + ni) * hw + p];
        if (v > best) {
          best = v;
          best_n = ni;
        }
      }
      argmax[ki * hw + p] = best_n;
      o[(static_cast<std::int64_t>(ki) * 2) * hw + p] = best * dir_c[best_n];
      o[(static_cast<std::int64_t>(ki) * 2 + 1) * hw + p] = best * dir_s[best_n];
    }
  }
  ensure_finite(out, "to_vector_field");

  if (should_record({&feat.tensor})) {
    Tensor in_copy = feat.tensor, out_copy = out;
    Tape::active()->record({"to_vector_field", {feat.tensor}, out,
                            [in_copy, out_copy, argmax, dir_c, dir_s, k, n, hw]() mutable {
                              if (!in_copy.requires_grad()) return;
                              const double* go = out_copy.grad();
                              double* gi = in_copy.grad();
                              for (int ki = 0; ki < k; ++ki) {
                                for (std::int64_t p = 0; p < hw; ++p) {
                                  const int ni = argmax[ki * hw + p];
                                  const double gx = go[(static_cast<std::int64_t>(ki) * 2) * hw + p];
                                  const double gy = go[(static_cast<std::int64_t>(ki) * 2 + 1) * hw + p];
                                  gi[(static_cast<std::int64_t>(ki) * n + ni) * hw + p] +=
                                      gx * dir_c[ni] + gy * dir_s[ni];
                                }
                              }
                            }});
  }
  return VectorField(out);
}

VectorField apply_rg_tg(int g_index, const VectorField& field, int group_order) {
  const CyclicGroup group(group_order);
  const int g = group.norm(g_index);
  if (g == 0) return VectorField(field.tensor.clone());

  Tensor rotated = rotate_image(field.tensor, g, group_order);
  double c, s;
  unit_direction(g, group_order, c, s);

  const int k = field.channels(), h = field.height(), w = field.width();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out(rotated.shape());
  const double* r = rotated.data();
  double* o = out.data();
  for (int ki = 0; ki < k; ++ki) {
    const double* vx = r + (static_cast<std::int64_t>(ki) * 2) * hw;
    const double* vy = vx + hw;
    double* ox = o + (static_cast<std::int64_t>(ki) * 2) * hw;
    double* oy = ox + hw;
    for (std::int64_t p = 0; p < hw; ++p) {
      ox[p] = c * vx[p] - s * vy[p];
      oy[p] = s * vx[p] + c * vy[p];
    }
  }
  return VectorField(out);
}

}  // namespace equikit
