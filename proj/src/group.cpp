// SPDX-License-Identifier: Apache-2.0

#include "equikit/group.hpp"

#include <cmath>

namespace equikit {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
}  // namespace

GroupFeature act_group_feature(int g, const GroupFeature& feat) {
  const int n = feat.order();
  const CyclicGroup group(n);
  const int gg = group.norm(g);
  std::vector<Tensor> planes;
  planes.reserve(n);
  for (int i = 0; i < n; ++i) {
    Tensor slice = select(feat.tensor, 1, group.norm(i - gg));
    planes.push_back(rotate_image(slice, gg, n));
  }
  return GroupFeature(stack(planes, 1));
}

Tensor mask_kernel_disk(const Tensor& weight) {
  const int rank = weight.rank();
  if (rank < 2) throw std::invalid_argument("mask_kernel_disk: need trailing kernel axes");
  const int k = weight.dim(rank - 1);
  if (weight.dim(rank - 2) != k) throw std::invalid_argument("mask_kernel_disk: kernel must be square");
  const double c = (k - 1) * 0.5;
  const double r2 = c * c + 1e-6;

  Tensor out(weight.shape());
  const std::int64_t planes = weight.numel() / (static_cast<std::int64_t>(k) * k);
  const double* src = weight.data();
  double* dst = out.data();
  for (std::int64_t p = 0; p < planes; ++p) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        const double d2 = (i - c) * (i - c) + (j - c) * (j - c);
        dst[(p * k + i) * k + j] = d2 <= r2 ? src[(p * k + i) * k + j] : 0.0;
      }
    }
  }
  if (should_record({&weight})) {
    Tensor w_copy = weight, out_copy = out;
    Tape::active()->record({"mask_kernel_disk", {weight}, out, [w_copy, out_copy, planes, k, c, r2]() mutable {
       if (!w_copy.requires_grad()) return;
       const double* go = out_copy.grad();
       double* gw = w_copy.grad();
       for (std::int64_t p = 0; p < planes; ++p)
         for (int i = 0; i < k; ++i)
           for (int j = 0; j < k; ++j) {
             const double d2 = (i - c) * (i - c) + (j - c) * (j - c);
             if (d2 <= r2) gw[(p * k + i) * k + j] += go[(p * k + i) * k + j];
           }
     }});
  }
  return out;
}

Tensor rotate_kernel(const Tensor& weight, int g_index, int group_order) {
  const int rank = weight.rank();
  if (rank < 2) throw std::invalid_argument("rotate_kernel: need trailing kernel axes");
  const int k = weight.dim(rank - 1);
  if (weight.dim(rank - 2) != k) throw std::invalid_argument("rotate_kernel: kernel must be square");
  if (k % 2 == 0) throw std::invalid_argument("rotate_kernel: kernel size must be odd");

  const CyclicGroup group(group_order);
  const int g = group.norm(g_index);
  if (g == 0) return weight;
  if (group.is_quarter_turn(g))
    return rotate_image(weight, static_cast<int>((4LL * g / group_order) % 4), 4);

  // Residual-first decomposition: one bilinear resample of the sub-quarter
  // angle, then exact quarter turns. Keeps rotate_kernel(g + N/4 steps) equal
  // to a quarter turn of rotate_kernel(g) exactly.
  const double angle = group.angle(g);
  const int quarters = static_cast<int>(std::floor(angle / (kPi / 2.0) + 1e-12));
  const double residual = angle - quarters * (kPi / 2.0);
  Tensor out = mask_kernel_disk(weight);
  out = rotate_image_radians(out, residual, /*force_bilinear=*/true);
  out = mask_kernel_disk(out);
  if (quarters % 4 != 0) out = rotate_image(out, quarters % 4, 4);
  return out;
}

GroupFeature lift_conv(const Tensor& image, const Tensor& weight, int stride, int padding,
                       int group_order) {
  if (group_order < 1) throw std::invalid_argument("lift_conv: group order must be >= 1");
  Tensor bank = group_needs_disk_mask(group_order) ? mask_kernel_disk(weight) : weight;
  std::vector<Tensor> planes;
  planes.reserve(group_order);
  for (int n = 0; n < group_order; ++n)
    planes.push_back(conv2d(image, rotate_kernel(bank, n, group_order), stride, padding));
  return GroupFeature(stack(planes, 1));
}

GroupFeature group_conv(const GroupFeature& feat, const Tensor& weight, int stride, int padding) {
  if (weight.rank() != 5)
    throw std::invalid_argument("group_conv: weight must be [C_out,C_in,N,k,k]");
  const int n = feat.order();
  if (weight.dim(2) != n)
    throw std::invalid_argument("group_conv: weight orientation axis " +
                                std::to_string(weight.dim(2)) + " does not match feature order " +
                                std::to_string(n));
  const CyclicGroup group(n);
  Tensor bank = group_needs_disk_mask(n) ? mask_kernel_disk(weight) : weight;

  std::vector<Tensor> planes;
  planes.reserve(n);
  for (int out_orient = 0; out_orient < n; ++out_orient) {
    Tensor acc;
    for (int m = 0; m < n; ++m) {
      Tensor w_slice = select(bank, 2, group.norm(m - out_orient));
      Tensor term = conv2d(select(feat.tensor, 1, m), rotate_kernel(w_slice, out_orient, n),
                           stride, padding);
      acc = m == 0 ? term : add(acc, term);
    }
    planes.push_back(acc);
  }
  return GroupFeature(stack(planes, 1));
}

Tensor group_pool(const GroupFeature& feat) {
  const int c = feat.channels(), n = feat.order(), h = feat.height(), w = feat.width();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({c, h, w});
  std::vector<int> argmax(static_cast<std::size_t>(c) * hw);
  const double* f = feat.tensor.data();
  double* o = out.data();
  for (int ci = 0; ci < c; ++ci) {
    for (std::int64_t p = 0; p < hw; ++p) {
      double best = f[(static_cast<std::int64_t>(ci) * n) * hw + p];
      int best_n = 0;
      for (int ni = 1; ni < n; ++ni) {
        const double v = f[(static_cast<std::int64_t>(ci) * n + ni) * hw + p];
        if (v > best) {  // strict: ties keep the lowest index
          best = v;
          best_n = ni;
        }
      }
      o[ci * hw + p] = best;
      argmax[ci * hw + p] = best_n;
    }
  }
  ensure_finite(out, "group_pool");
  if (should_record({&feat.tensor})) {
    Tensor in_copy = feat.tensor, out_copy = out;
    Tape::active()->record({"group_pool", {feat.tensor}, out, [in_copy, out_copy, argmax, c, n, hw]() mutable {
       if (!in_copy.requires_grad()) return;
       const double* go = out_copy.grad();
       double* gi = in_copy.grad();
       for (int ci = 0; ci < c; ++ci)
         for (std::int64_t p = 0; p < hw; ++p)
           gi[(static_cast<std::int64_t>(ci) * n + argmax[ci * hw + p]) * hw + p] += go[ci * hw + p];
     }});
  }
  return out;
}

GroupFeature orientation_align(const GroupFeature& feat, const Tensor& theta) {
  const int c = feat.channels(), n = feat.order(), h = feat.height(), w = feat.width();
  if (theta.rank() != 2 || theta.dim(0) != h || theta.dim(1) != w)
    throw std::invalid_argument("orientation_align: theta must be [H,W] matching the feature");
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;

  // Per-pixel integer shift and blend weight.
  std::vector<int> shift(static_cast<std::size_t>(hw));
  std::vector<double> alpha(static_cast<std::size_t>(hw));
  const double* th = theta.data();
  for (std::int64_t p = 0; p < hw; ++p) {
    const double t = th[p] * n / kTwoPi;
    const double r = std::floor(t);
    shift[p] = static_cast<int>(((static_cast<long long>(r) % n) + n) % n);
    alpha[p] = t - r;
  }

  Tensor out(feat.tensor.shape());
  const double* f = feat.tensor.data();
  double* o = out.data();
  for (int ci = 0; ci < c; ++ci) {
    for (int ni = 0; ni < n; ++ni) {
      double* o_p = o + (static_cast<std::int64_t>(ci) * n + ni) * hw;
      for (std::int64_t p = 0; p < hw; ++p) {
        const int lo = (ni + shift[p]) % n;
        const int hi = (lo + 1) % n;
        const double a = alpha[p];
        o_p[p] = (1.0 - a) * f[(static_cast<std::int64_t>(ci) * n + lo) * hw + p] +
                 a * f[(static_cast<std::int64_t>(ci) * n + hi) * hw + p];
      }
    }
  }
  ensure_finite(out, "orientation_align");

  if (should_record({&feat.tensor, &theta})) {
    Tensor f_copy = feat.tensor, t_copy = theta, out_copy = out;
    Tape::active()->record(
        {"orientation_align", {feat.tensor, theta}, out,
         [f_copy, t_copy, out_copy, shift, alpha, c, n, hw]() mutable {
           const double* go = out_copy.grad();
           const double* f = f_copy.data();
           double* gf = f_copy.requires_grad() ? f_copy.grad() : nullptr;
           double* gt = t_copy.requires_grad() ? t_copy.grad() : nullptr;
           for (int ci = 0; ci < c; ++ci) {
             for (int ni = 0; ni < n; ++ni) {
               const double* go_p = go + (static_cast<std::int64_t>(ci) * n + ni) * hw;
               for (std::int64_t p = 0; p < hw; ++p) {
                 const int lo = (ni + shift[p]) % n;
                 const int hi = (lo + 1) % n;
                 const double a = alpha[p];
                 const double g = go_p[p];
                 if (g == 0.0) continue;
                 const std::int64_t ilo = (static_cast<std::int64_t>(ci) * n + lo) * hw + p;
                 const std::int64_t ihi = (static_cast<std::int64_t>(ci) * n + hi) * hw + p;
                 if (gf) {
                   gf[ilo] += g * (1.0 - a);
                   gf[ihi] += g * a;
                 }
                 if (gt) gt[p] += g * (f[ihi] - f[ilo]) * n / kTwoPi;
               }
             }
           }
         }});
  }
  return GroupFeature(out);
}

}  // namespace equikit
