// SPDX-License-Identifier: Apache-2.0
//
// Differentiable kernels shared by every layer: cross-correlation, bilinear
// sampling with a zero border, exact/interpolated image rotation, odd-size
// padding, and the small set of elementwise ops the training loop needs.
//
// Coordinate convention (fixed project-wide): x = column index, y = row
// index, origin at the center of pixel (0,0), angles counter-clockwise.

#pragma once

#include <cmath>
#include <vector>

#include "equikit/tensor.hpp"

namespace equikit {

// ---------------------------------------------------------------------------
// Raw bilinear taps on a single [H,W] plane, zero outside the image
// (consistent with zero-padded convolution). Shared by bilinear_sample,
// rotation and the deformable layers.
// ---------------------------------------------------------------------------

inline bool sample_in_range(int h, int w, double x, double y) {
  return !(y <= -1.0 || static_cast<double>(h) <= y || x <= -1.0 ||
           static_cast<double>(w) <= x);
}

inline double bilinear_read(const double* plane, int h, int w, double x, double y) {
  if (!sample_in_range(h, w, x, y)) return 0.0;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = x0 + 1, y1 = y0 + 1;
  const double lx = x - x0, ly = y - y0;
  const double hx = 1.0 - lx, hy = 1.0 - ly;
  double v = 0.0;
  if (y0 >= 0 && x0 >= 0) v += hy * hx * plane[y0 * w + x0];
  if (y0 >= 0 && x1 <= w - 1) v += hy * lx * plane[y0 * w + x1];
  if (y1 <= h - 1 && x0 >= 0) v += ly * hx * plane[y1 * w + x0];
  if (y1 <= h - 1 && x1 <= w - 1) v += ly * lx * plane[y1 * w + x1];
  return v;
}

inline void bilinear_scatter(double* plane, int h, int w, double x, double y, double g) {
  if (!sample_in_range(h, w, x, y)) return;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = x0 + 1, y1 = y0 + 1;
  const double lx = x - x0, ly = y - y0;
  const double hx = 1.0 - lx, hy = 1.0 - ly;
  if (y0 >= 0 && x0 >= 0) plane[y0 * w + x0] += g * hy * hx;
  if (y0 >= 0 && x1 <= w - 1) plane[y0 * w + x1] += g * hy * lx;
  if (y1 <= h - 1 && x0 >= 0) plane[y1 * w + x0] += g * ly * hx;
  if (y1 <= h - 1 && x1 <= w - 1) plane[y1 * w + x1] += g * ly * lx;
}

/// d(bilinear_read)/d(x,y) at a sampling point (piecewise linear in between
/// cell boundaries; callers keep test points away from integer coordinates).
inline void bilinear_coord_grad(const double* plane, int h, int w, double x, double y,
                                double& gx, double& gy) {
  gx = 0.0;
  gy = 0.0;
  if (!sample_in_range(h, w, x, y)) return;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = x0 + 1, y1 = y0 + 1;
  const double lx = x - x0, ly = y - y0;
  const double hx = 1.0 - lx, hy = 1.0 - ly;
  const double v00 = (y0 >= 0 && x0 >= 0) ? plane[y0 * w + x0] : 0.0;
  const double v01 = (y0 >= 0 && x1 <= w - 1) ? plane[y0 * w + x1] : 0.0;
  const double v10 = (y1 <= h - 1 && x0 >= 0) ? plane[y1 * w + x0] : 0.0;
  const double v11 = (y1 <= h - 1 && x1 <= w - 1) ? plane[y1 * w + x1] : 0.0;
  gx = hy * (v01 - v00) + ly * (v11 - v10);
  gy = hx * (v10 - v00) + lx * (v11 - v01);
}

// ---------------------------------------------------------------------------
// Spatial ops
// ---------------------------------------------------------------------------

/// 2-D cross-correlation. input [C_in,H,W], weight [C_out,C_in,k,k], square
/// odd k (rotated filter banks need a center tap). Differentiable w.r.t.
/// input and weight.
Tensor conv2d(const Tensor& input, const Tensor& weight, int stride, int padding);

/// Samples feature [C,H,W] at P points given as a [P,2] tensor of (x,y).
/// Returns [C,P]. Total: out-of-range points contribute zero. Differentiable
/// w.r.t. the feature and the point coordinates.
Tensor bilinear_sample(const Tensor& feature, const Tensor& points);

/// Rotation of the trailing two axes by 2*pi*g/N counter-clockwise about the
/// image center ((W-1)/2, (H-1)/2). Quarter-turn multiples use an exact index
/// permutation when the canvas admits one; everything else is inverse-map
/// bilinear resampling on the same canvas (clipped corners read as zero).
Tensor rotate_image(const Tensor& input, int g_index, int group_order);

/// Arbitrary-angle variant (radians, CCW). `force_bilinear` keeps the
/// interpolating path even at quarter turns (used to cross-check the two
/// code paths against each other).
Tensor rotate_image_radians(const Tensor& input, double angle, bool force_bilinear = false);

/// Appends one zero row (bottom) / column (right) to any even trailing
/// dimension so both spatial dims end up odd; odd dims pass through. Strided
/// convolution only commutes with quarter-turn rotation on odd sizes, since
/// the stride grid otherwise anchors to the top-left corner.
Tensor pad_to_odd(const Tensor& input);

// Position map of rotate_image: rotates image points (x,y) by `angle` CCW
// about the center of an h-by-w canvas. Used to transform box corners
// analytically alongside image rotation.
inline void rotate_position(double x, double y, double angle, int h, int w,
                            double& out_x, double& out_y) {
  const double cx = (w - 1) * 0.5, cy = (h - 1) * 0.5;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = x - cx, v = y - cy;
  out_x = cx + c * u + s * v;
  out_y = cy - s * u + c * v;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

/// Copy of the `index`-th slice along `axis` (the axis is removed).
Tensor select(const Tensor& input, int axis, int index);

/// Stacks same-shaped tensors along a new axis inserted at `axis`.
Tensor stack(const std::vector<Tensor>& inputs, int axis);

/// Same data, new shape (element count must match).
Tensor reshape(const Tensor& input, std::vector<int> new_shape);

// ---------------------------------------------------------------------------
// Elementwise / reduction ops
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor relu(const Tensor& a);  // subgradient 0 at the kink
Tensor sigmoid(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// out[c, ...] = input[c, ...] + bias[c]; bias length matches axis 0.
Tensor add_channel_bias(const Tensor& input, const Tensor& bias);

}  // namespace equikit
