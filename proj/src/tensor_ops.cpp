// SPDX-License-Identifier: Apache-2.0

#include "equikit/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace equikit {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct ConvDims {
  int c_in, h, w;
  int c_out, k;
  int out_h, out_w;
};

ConvDims conv_dims(const Tensor& input, const Tensor& weight, int stride, int padding) {
  if (input.rank() != 3) throw std::invalid_argument("conv2d: input must be [C,H,W]");
  if (weight.rank() != 4) throw std::invalid_argument("conv2d: weight must be [C_out,C_in,k,k]");
  ConvDims d{};
  d.c_in = input.dim(0);
  d.h = input.dim(1);
  d.w = input.dim(2);
  d.c_out = weight.dim(0);
  d.k = weight.dim(2);
  if (weight.dim(1) != d.c_in)
    throw std::invalid_argument("conv2d: weight C_in " + std::to_string(weight.dim(1)) +
                                " does not match input C " + std::to_string(d.c_in));
  if (weight.dim(3) != d.k) throw std::invalid_argument("conv2d: kernel must be square");
  if (d.k % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
  d.out_h = (d.h + 2 * padding - d.k) / stride + 1;
  d.out_w = (d.w + 2 * padding - d.k) / stride + 1;
  if (d.h + 2 * padding < d.k || d.w + 2 * padding < d.k || d.out_h < 1 || d.out_w < 1)
    throw std::invalid_argument("conv2d: output would be empty");
  return d;
}

// Exact quarter-turn permutation of the trailing two axes; q in {0,1,2,3}.
// Odd q requires a square canvas (callers fall back to resampling otherwise).
Tensor quarter_rotate_values(const Tensor& input, int q) {
  const int rank = input.rank();
  const int h = input.dim(rank - 2), w = input.dim(rank - 1);
  std::vector<int> out_shape = input.shape();
  Tensor out(out_shape);
  const std::int64_t planes = input.numel() / (static_cast<std::int64_t>(h) * w);
  const double* src = input.data();
  double* dst = out.data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* in_p = src + p * h * w;
    double* out_p = dst + p * h * w;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        double v;
        switch (q) {
          case 1: v = in_p[j * w + (w - 1 - i)]; break;
          case 2: v = in_p[(h - 1 - i) * w + (w - 1 - j)]; break;
          case 3: v = in_p[(h - 1 - j) * w + i]; break;
          default: v = in_p[i * w + j]; break;
        }
        out_p[i * w + j] = v;
      }
    }
  }
  return out;
}

Tensor quarter_rotate_op(const Tensor& input, int q) {
  Tensor out = quarter_rotate_values(input, q);
  ensure_finite(out, "rotate_image");
  if (should_record({&input})) {
    Tensor in_copy = input;
    Tensor out_copy = out;
    int qi = q;
    Tape::active()->record({"rotate_image", {input}, out,
                            [in_copy, out_copy, qi]() mutable {
                              if (!in_copy.requires_grad()) return;
                              // transpose of a permutation: rotate back
                              Tensor g = out_copy.grad_tensor();
                              Tensor gin = quarter_rotate_values(g, (4 - qi) % 4);
                              double* acc = in_copy.grad();
                              const double* gp = gin.data();
                              for (std::int64_t i = 0; i < gin.numel(); ++i) acc[i] += gp[i];
                            }});
  }
  return out;
}

Tensor rotate_bilinear_op(const Tensor& input, double angle) {
  const int rank = input.rank();
  const int h = input.dim(rank - 2), w = input.dim(rank - 1);
  const double cx = (w - 1) * 0.5, cy = (h - 1) * 0.5;
  const double c = std::cos(angle), s = std::sin(angle);
  const std::int64_t planes = input.numel() / (static_cast<std::int64_t>(h) * w);

  Tensor out(input.shape());
  const double* src = input.data();
  double* dst = out.data();
  // inverse map: source = center + A(-angle) * (q - center)
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* in_p = src + p * h * w;
    double* out_p = dst + p * h * w;
    for (int i = 0; i < h; ++i) {
      const double v = i - cy;
      for (int j = 0; j < w; ++j) {
        const double u = j - cx;
        const double sx = cx + c * u - s * v;
        const double sy = cy + s * u + c * v;
        out_p[i * w + j] = bilinear_read(in_p, h, w, sx, sy);
      }
    }
  }
  ensure_finite(out, "rotate_image");
  if (should_record({&input})) {
    Tensor in_copy = input;
    Tensor out_copy = out;
    Tape::active()->record(
        {"rotate_image", {input}, out, [in_copy, out_copy, h, w, c, s, cx, cy, planes]() mutable {
           if (!in_copy.requires_grad()) return;
           const double* go = out_copy.grad();
           double* gi = in_copy.grad();
           for (std::int64_t p = 0; p < planes; ++p) {
             const double* go_p = go + p * h * w;
             double* gi_p = gi + p * h * w;
             for (int i = 0; i < h; ++i) {
               const double v = i - cy;
               for (int j = 0; j < w; ++j) {
                 const double u = j - cx;
                 const double sx = cx + c * u - s * v;
                 const double sy = cy + s * u + c * v;
                 bilinear_scatter(gi_p, h, w, sx, sy, go_p[i * w + j]);
               }
             }
           }
         }});
  }
  return out;
}

Tensor identity_op(const Tensor& input, const char* name) {
  Tensor out = input.clone();
  if (should_record({&input})) {
    Tensor in_copy = input;
    Tensor out_copy = out;
    Tape::active()->record({name, {input}, out, [in_copy, out_copy]() mutable {
                              if (!in_copy.requires_grad()) return;
                              const double* go = out_copy.grad();
                              double* gi = in_copy.grad();
                              for (std::int64_t i = 0; i < in_copy.numel(); ++i) gi[i] += go[i];
                            }});
  }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, int stride, int padding) {
  const ConvDims d = conv_dims(input, weight, stride, padding);
  Tensor out({d.c_out, d.out_h, d.out_w});
  const double* in = input.data();
  const double* w = weight.data();
  double* o = out.data();

  for (int co = 0; co < d.c_out; ++co) {
    for (int oy = 0; oy < d.out_h; ++oy) {
      const int iy0 = oy * stride - padding;
      const int ky_lo = std::max(0, -iy0);
      const int ky_hi = std::min(d.k - 1, d.h - 1 - iy0);
      for (int ox = 0; ox < d.out_w; ++ox) {
        const int ix0 = ox * stride - padding;
        const int kx_lo = std::max(0, -ix0);
        const int kx_hi = std::min(d.k - 1, d.w - 1 - ix0);
        double acc = 0.0;
        for (int ci = 0; ci < d.c_in; ++ci) {
          const double* in_p = in + (static_cast<std::int64_t>(ci) * d.h) * d.w;
          const double* w_p = w + ((static_cast<std::int64_t>(co) * d.c_in + ci) * d.k) * d.k;
          for (int ky = ky_lo; ky <= ky_hi; ++ky) {
            const double* in_row = in_p + (iy0 + ky) * d.w + ix0;
            const double* w_row = w_p + ky * d.k;
            for (int kx = kx_lo; kx <= kx_hi; ++kx) acc += in_row[kx] * w_row[kx];
          }
        }
        o[(static_cast<std::int64_t>(co) * d.out_h + oy) * d.out_w + ox] = acc;
      }
    }
  }
  ensure_finite(out, "conv2d");

  if (should_record({&input, &weight})) {
    Tensor in_copy = input, w_copy = weight, out_copy = out;
    ConvDims dd = d;
    int st = stride, pad = padding;
    Tape::active()->record({"conv2d", {input, weight}, out, [in_copy, w_copy, out_copy, dd, st, pad]() mutable {
       const double* go = out_copy.grad();
       const double* in = in_copy.data();
       const double* w = w_copy.data();
       const bool need_in = in_copy.requires_grad();
       const bool need_w = w_copy.requires_grad();
       double* gi = need_in ? in_copy.grad() : nullptr;
       double* gw = need_w ? w_copy.grad() : nullptr;
       for (int co = 0; co < dd.c_out; ++co) {
         for (int oy = 0; oy < dd.out_h; ++oy) {
           const int iy0 = oy * st - pad;
           const int ky_lo = std::max(0, -iy0);
           const int ky_hi = std::min(dd.k - 1, dd.h - 1 - iy0);
           for (int ox = 0; ox < dd.out_w; ++ox) {
             const int ix0 = ox * st - pad;
             const int kx_lo = std::max(0, -ix0);
             const int kx_hi = std::min(dd.k - 1, dd.w - 1 - ix0);
             const double g = go[(static_cast<std::int64_t>(co) * dd.out_h + oy) * dd.out_w + ox];
             if (g == 0.0) continue;
             for (int ci = 0; ci < dd.c_in; ++ci) {
               const std::int64_t in_base = (static_cast<std::int64_t>(ci) * dd.h) * dd.w;
               const std::int64_t w_base = ((static_cast<std::int64_t>(co) * dd.c_in + ci) * dd.k) * dd.k;
               for (int ky = ky_lo; ky <= ky_hi; ++ky) {
                 const std::int64_t in_row = in_base + (iy0 + ky) * dd.w + ix0;
                 const std::int64_t w_row = w_base + ky * dd.k;
                 for (int kx = kx_lo; kx <= kx_hi; ++kx) {
                   if (gi) gi[in_row + kx] += g * w[w_row + kx];
                   if (gw) gw[w_row + kx] += g * in[in_row + kx];
                 }
               }
             }
           }
         }
       }
     }});
  }
  return out;
}

Tensor bilinear_sample(const Tensor& feature, const Tensor& points) {
  if (feature.rank() != 3) throw std::invalid_argument("bilinear_sample: feature must be [C,H,W]");
  if (points.rank() != 2 || points.dim(1) != 2)
    throw std::invalid_argument("bilinear_sample: points must be [P,2]");
  const int c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  const int np = points.dim(0);
  Tensor out({c, np});
  const double* f = feature.data();
  const double* pt = points.data();
  double* o = out.data();
  for (int p = 0; p < np; ++p) {
    const double x = pt[2 * p], y = pt[2 * p + 1];
    for (int ci = 0; ci < c; ++ci)
      o[ci * np + p] = bilinear_read(f + static_cast<std::int64_t>(ci) * h * w, h, w, x, y);
  }
  ensure_finite(out, "bilinear_sample");

  if (should_record({&feature, &points})) {
    Tensor f_copy = feature, p_copy = points, out_copy = out;
    Tape::active()->record({"bilinear_sample", {feature, points}, out, [f_copy, p_copy, out_copy, c, h, w, np]() mutable {
       const double* go = out_copy.grad();
       const double* f = f_copy.data();
       const double* pt = p_copy.data();
       const bool need_f = f_copy.requires_grad();
       const bool need_p = p_copy.requires_grad();
       double* gf = need_f ? f_copy.grad() : nullptr;
       double* gp = need_p ? p_copy.grad() : nullptr;
       for (int p = 0; p < np; ++p) {
         const double x = pt[2 * p], y = pt[2 * p + 1];
         for (int ci = 0; ci < c; ++ci) {
           const double g = go[ci * np + p];
           if (g == 0.0) continue;
           const std::int64_t base = static_cast<std::int64_t>(ci) * h * w;
           if (gf) bilinear_scatter(gf + base, h, w, x, y, g);
           if (gp) {
             double gx, gy;
             bilinear_coord_grad(f + base, h, w, x, y, gx, gy);
             gp[2 * p] += g * gx;
             gp[2 * p + 1] += g * gy;
           }
         }
       }
     }});
  }
  return out;
}

Tensor rotate_image(const Tensor& input, int g_index, int group_order) {
  if (group_order < 1) throw std::invalid_argument("rotate_image: group order must be >= 1");
  if (input.rank() < 2) throw std::invalid_argument("rotate_image: input must have spatial axes");
  const int n = group_order;
  const int g = ((g_index % n) + n) % n;
  if (g == 0) return identity_op(input, "rotate_image");
  if ((4LL * g) % n == 0) {
    const int q = static_cast<int>((4LL * g / n) % 4);
    const int rank = input.rank();
    const bool square = input.dim(rank - 2) == input.dim(rank - 1);
    if (q == 2 || square) return quarter_rotate_op(input, q);
  }
  return rotate_bilinear_op(input, 2.0 * kPi * g / n);
}

Tensor rotate_image_radians(const Tensor& input, double angle, bool force_bilinear) {
  if (input.rank() < 2) throw std::invalid_argument("rotate_image: input must have spatial axes");
  if (!force_bilinear) {
    const double quarter = angle / (kPi / 2.0);
    const double nearest = std::round(quarter);
    if (std::abs(quarter - nearest) < 1e-12) {
      const int q = static_cast<int>(((static_cast<long long>(nearest) % 4) + 4) % 4);
      if (q == 0) return identity_op(input, "rotate_image");
      const int rank = input.rank();
      const bool square = input.dim(rank - 2) == input.dim(rank - 1);
      if (q == 2 || square) return quarter_rotate_op(input, q);
    }
  }
  return rotate_bilinear_op(input, angle);
}

Tensor pad_to_odd(const Tensor& input) {
  if (input.rank() < 2) throw std::invalid_argument("pad_to_odd: input must have spatial axes");
  const int rank = input.rank();
  const int h = input.dim(rank - 2), w = input.dim(rank - 1);
  const int nh = (h % 2 == 0) ? h + 1 : h;
  const int nw = (w % 2 == 0) ? w + 1 : w;
  if (nh == h && nw == w) return identity_op(input, "pad_to_odd");

  std::vector<int> out_shape = input.shape();
  out_shape[rank - 2] = nh;
  out_shape[rank - 1] = nw;
  Tensor out(out_shape);
  const std::int64_t planes = input.numel() / (static_cast<std::int64_t>(h) * w);
  const double* src = input.data();
  double* dst = out.data();
  for (std::int64_t p = 0; p < planes; ++p)
    for (int i = 0; i < h; ++i)
      std::memcpy(dst + (p * nh + i) * nw, src + (p * h + i) * w, sizeof(double) * w);

  if (should_record({&input})) {
    Tensor in_copy = input, out_copy = out;
    Tape::active()->record({"pad_to_odd", {input}, out, [in_copy, out_copy, planes, h, w, nh, nw]() mutable {
       if (!in_copy.requires_grad()) return;
       const double* go = out_copy.grad();
       double* gi = in_copy.grad();
       for (std::int64_t p = 0; p < planes; ++p)
         for (int i = 0; i < h; ++i)
           for (int j = 0; j < w; ++j)
             gi[(p * h + i) * w + j] += go[(p * nh + i) * nw + j];
     }});
  }
  return out;
}

Tensor select(const Tensor& input, int axis, int index) {
  const auto& s = input.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw std::invalid_argument("select: axis out of range");
  if (index < 0 || index >= s[axis]) throw std::invalid_argument("select: index out of range");
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  std::vector<int> out_shape;
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);

  Tensor out(out_shape);
  const int d = s[axis];
  const double* src = input.data();
  double* dst = out.data();
  for (std::int64_t o = 0; o < outer; ++o)
    std::memcpy(dst + o * inner, src + (o * d + index) * inner, sizeof(double) * inner);

  if (should_record({&input})) {
    Tensor in_copy = input, out_copy = out;
    Tape::active()->record({"select", {input}, out, [in_copy, out_copy, outer, inner, d, index]() mutable {
       if (!in_copy.requires_grad()) return;
       const double* go = out_copy.grad();
       double* gi = in_copy.grad();
       for (std::int64_t o = 0; o < outer; ++o)
         for (std::int64_t i = 0; i < inner; ++i)
           gi[(o * d + index) * inner + i] += go[o * inner + i];
     }});
  }
  return out;
}

Tensor stack(const std::vector<Tensor>& inputs, int axis) {
  if (inputs.empty()) throw std::invalid_argument("stack: no inputs");
  const auto& base = inputs[0].shape();
  for (const auto& t : inputs)
    if (t.shape() != base) throw std::invalid_argument("stack: shape mismatch");
  const int rank = static_cast<int>(base.size());
  if (axis < 0 || axis > rank) throw std::invalid_argument("stack: axis out of range");

  const int n = static_cast<int>(inputs.size());
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= base[i];
  for (int i = axis; i < rank; ++i) inner *= base[i];
  std::vector<int> out_shape(base.begin(), base.end());
  out_shape.insert(out_shape.begin() + axis, n);

  Tensor out(out_shape);
  double* dst = out.data();
  for (int i = 0; i < n; ++i) {
    const double* src = inputs[i].data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(dst + (o * n + i) * inner, src + o * inner, sizeof(double) * inner);
  }

  bool record = Tape::active() != nullptr;
  bool any_grad = false;
  for (const auto& t : inputs) any_grad |= t.requires_grad();
  if (record && any_grad) {
    std::vector<Tensor> ins = inputs;
    Tensor out_copy = out;
    Tape::active()->record({"stack", inputs, out, [ins, out_copy, outer, inner, n]() mutable {
       const double* go = out_copy.grad();
       for (int i = 0; i < n; ++i) {
         if (!ins[i].requires_grad()) continue;
         double* gi = ins[i].grad();
         for (std::int64_t o = 0; o < outer; ++o)
           for (std::int64_t j = 0; j < inner; ++j)
             gi[o * inner + j] += go[(o * n + i) * inner + j];
       }
     }});
  }
  return out;
}

Tensor reshape(const Tensor& input, std::vector<int> new_shape) {
  if (shape_numel(new_shape) != input.numel())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out = Tensor::from(std::move(new_shape),
                            std::vector<double>(input.data(), input.data() + input.numel()));
  if (should_record({&input})) {
    Tensor in_copy = input, out_copy = out;
    Tape::active()->record({"reshape", {input}, out, [in_copy, out_copy]() mutable {
       if (!in_copy.requires_grad()) return;
       const double* go = out_copy.grad();
       double* gi = in_copy.grad();
       for (std::int64_t i = 0; i < in_copy.numel(); ++i) gi[i] += go[i];
     }});
  }
  return out;
}

namespace {

template <class Fwd, class Bwd>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(name) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = fwd(pa[i], pb[i]);
  ensure_finite(out, name);
  if (should_record({&a, &b})) {
    Tensor ac = a, bc = b, oc = out;
    Tape::active()->record({name, {a, b}, out, [ac, bc, oc, bwd]() mutable {
       const double* go = oc.grad();
       const double* pa = ac.data();
       const double* pb = bc.data();
       double* ga = ac.requires_grad() ? ac.grad() : nullptr;
       double* gb = bc.requires_grad() ? bc.grad() : nullptr;
       for (std::int64_t i = 0; i < oc.numel(); ++i) bwd(go[i], pa[i], pb[i], ga ? &ga[i] : nullptr,
                                                        gb ? &gb[i] : nullptr);
     }});
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op("add", a, b, [](double x, double y) { return x + y; },
                   [](double g, double, double, double* ga, double* gb) {
                     if (ga) *ga += g;
                     if (gb) *gb += g;
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op("sub", a, b, [](double x, double y) { return x - y; },
                   [](double g, double, double, double* ga, double* gb) {
                     if (ga) *ga += g;
                     if (gb) *gb -= g;
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op("mul", a, b, [](double x, double y) { return x * y; },
                   [](double g, double x, double y, double* ga, double* gb) {
                     if (ga) *ga += g * y;
                     if (gb) *gb += g * x;
                   });
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * factor;
  ensure_finite(out, "scale");
  if (should_record({&a})) {
    Tensor ac = a, oc = out;
    Tape::active()->record({"scale", {a}, out, [ac, oc, factor]() mutable {
       if (!ac.requires_grad()) return;
       const double* go = oc.grad();
       double* ga = ac.grad();
       for (std::int64_t i = 0; i < oc.numel(); ++i) ga[i] += go[i] * factor;
     }});
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double value) {
  Tensor out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + value;
  ensure_finite(out, "add_scalar");
  if (should_record({&a})) {
    Tensor ac = a, oc = out;
    Tape::active()->record({"add_scalar", {a}, out, [ac, oc]() mutable {
       if (!ac.requires_grad()) return;
       const double* go = oc.grad();
       double* ga = ac.grad();
       for (std::int64_t i = 0; i < oc.numel(); ++i) ga[i] += go[i];
     }});
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] > 0.0 ? pa[i] : 0.0;
  if (should_record({&a})) {
    Tensor ac = a, oc = out;
    Tape::active()->record({"relu", {a}, out, [ac, oc]() mutable {
       if (!ac.requires_grad()) return;
       const double* go = oc.grad();
       const double* pa = ac.data();
       double* ga = ac.grad();
       for (std::int64_t i = 0; i < oc.numel(); ++i)
         if (pa[i] > 0.0) ga[i] += go[i];
     }});
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = 1.0 / (1.0 + std::exp(-pa[i]));
  ensure_finite(out, "sigmoid");
  if (should_record({&a})) {
    Tensor ac = a, oc = out;
    Tape::active()->record({"sigmoid", {a}, out, [ac, oc]() mutable {
       if (!ac.requires_grad()) return;
       const double* go = oc.grad();
       const double* po = oc.data();
       double* ga = ac.grad();
       for (std::int64_t i = 0; i < oc.numel(); ++i) ga[i] += go[i] * po[i] * (1.0 - po[i]);
     }});
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  const double* pa = a.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) s += pa[i];
  Tensor out = Tensor::scalar(s);
  ensure_finite(out, "sum");
  if (should_record({&a})) {
    Tensor ac = a, oc = out;
    Tape::active()->record({"sum", {a}, out, [ac, oc]() mutable {
       if (!ac.requires_grad()) return;
       const double g = oc.grad()[0];
       double* ga = ac.grad();
       for (std::int64_t i = 0; i < ac.numel(); ++i) ga[i] += g;
     }});
  }
  return out;
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  double s = 0.0;
  const double* pa = a.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) s += pa[i];
  Tensor out = Tensor::scalar(s * inv);
  ensure_finite(out, "mean");
  if (should_record({&a})) {
    Tensor ac = a, oc = out;
    Tape::active()->record({"mean", {a}, out, [ac, oc, inv]() mutable {
       if (!ac.requires_grad()) return;
       const double g = oc.grad()[0] * inv;
       double* ga = ac.grad();
       for (std::int64_t i = 0; i < ac.numel(); ++i) ga[i] += g;
     }});
  }
  return out;
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias) {
  if (input.rank() < 1 || bias.rank() != 1 || bias.dim(0) != input.dim(0))
    throw std::invalid_argument("add_channel_bias: bias length must match axis 0");
  const int c = input.dim(0);
  const std::int64_t inner = input.numel() / c;
  Tensor out(input.shape());
  const double* pi = input.data();
  const double* pb = bias.data();
  double* po = out.data();
  for (int ci = 0; ci < c; ++ci)
    for (std::int64_t j = 0; j < inner; ++j) po[ci * inner + j] = pi[ci * inner + j] + pb[ci];
  ensure_finite(out, "add_channel_bias");
  if (should_record({&input, &bias})) {
    Tensor ic = input, bc = bias, oc = out;
    Tape::active()->record({"add_channel_bias", {input, bias}, out, [ic, bc, oc, c, inner]() mutable {
       const double* go = oc.grad();
       if (ic.requires_grad()) {
         double* gi = ic.grad();
         for (std::int64_t i = 0; i < oc.numel(); ++i) gi[i] += go[i];
       }
       if (bc.requires_grad()) {
         double* gb = bc.grad();
         for (int ci = 0; ci < c; ++ci) {
           double s = 0.0;
           for (std::int64_t j = 0; j < inner; ++j) s += go[ci * inner + j];
           gb[ci] += s;
         }
       }
     }});
  }
  return out;
}

}  // namespace equikit
