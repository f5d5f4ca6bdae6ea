// SPDX-License-Identifier: Apache-2.0
//
// Cyclic-group machinery: the C_N action on images and orientation-indexed
// features, rotated filter banks, lifting and group convolutions, group
// pooling and orientation alignment.
//
// A group feature carries an explicit orientation axis: tensor [C, N, H, W].
// The reference action of g in C_N on such a feature is spatial rotation of
// every plane by 2*pi*g/N combined with a cyclic shift of the orientation
// axis by g; every layer in this module commutes with that action (exactly
// for quarter-turn angles, approximately otherwise).

#pragma once

#include "equikit/tensor.hpp"
#include "equikit/tensor_ops.hpp"

namespace equikit {

struct CyclicGroup {
  int order;  // N; rotations by 2*pi*k/N, k = 0..N-1

  explicit CyclicGroup(int n) : order(n) {
    if (n < 1) throw std::invalid_argument("cyclic group order must be >= 1");
  }
  int compose(int a, int b) const { return ((a + b) % order + order) % order; }
  int inverse(int a) const { return ((order - a) % order + order) % order; }
  double angle(int g) const { return 2.0 * 3.14159265358979323846 * norm(g) / order; }
  int norm(int g) const { return ((g % order) + order) % order; }
  /// Quarter-turn elements are the ones whose rotation is exact on the pixel grid.
  bool is_quarter_turn(int g) const { return (4LL * norm(g)) % order == 0; }
};

struct GroupFeature {
  Tensor tensor;  // [C, N, H, W]

  GroupFeature() = default;
  explicit GroupFeature(Tensor t) : tensor(std::move(t)) {
    if (tensor.rank() != 4)
      throw std::invalid_argument("group feature must be [C,N,H,W], got " +
                                  shape_str(tensor.shape()));
  }
  int channels() const { return tensor.dim(0); }
  int order() const { return tensor.dim(1); }
  int height() const { return tensor.dim(2); }
  int width() const { return tensor.dim(3); }
};

/// Reference group action: out[c,n] = rotate(feat[c,(n-g) mod N], g). Every
/// equivariance test in the suite is stated against this map.
GroupFeature act_group_feature(int g, const GroupFeature& feat);

/// Kernel resampled on the grid rotated by 2*pi*g/N about the kernel center
/// (trailing two axes, odd square k). Quarter turns are exact permutations;
/// other angles decompose into one bilinear resample of the residual angle
/// followed by exact quarter turns, so rotating by g+N/4 steps equals a
/// quarter turn of the g-step rotation bit for bit. Linear in the weight.
Tensor rotate_kernel(const Tensor& weight, int g_index, int group_order);

/// Zeroes kernel taps outside the disk of radius (k-1)/2 about the center.
/// Filter banks for group orders with non-quarter-turn angles are masked this
/// way so that every rotated copy has the same support.
Tensor mask_kernel_disk(const Tensor& weight);

/// True when rotate_kernel at this order resamples (N has angles that are
/// not quarter turns) and the disk mask is applied to the bank.
inline bool group_needs_disk_mask(int group_order) {
  return group_order != 1 && group_order != 2 && group_order != 4;
}

/// Lifting convolution: plain image in, group feature out.
/// out[:, n] = conv2d(image, rotate_kernel(weight, n, N)).
GroupFeature lift_conv(const Tensor& image, const Tensor& weight, int stride, int padding,
                       int group_order);

/// Group convolution on the regular representation. weight [C_out,C_in,N,k,k];
/// out[:, n] = sum_m conv2d(feat[:, m], rotate_kernel(weight[:,:,(m-n) mod N], n, N)).
GroupFeature group_conv(const GroupFeature& feat, const Tensor& weight, int stride, int padding);

/// Max over the orientation axis: [C,N,H,W] -> [C,H,W]. Gradient routes to
/// the argmax entry; ties resolve to the lowest orientation index.
Tensor group_pool(const GroupFeature& feat);

/// Orientation alignment: per pixel, with r = floor(theta*N/2pi) and
/// alpha = theta*N/2pi - r,
///   out[c,n] = (1-alpha)*feat[c,(n+r) mod N] + alpha*feat[c,(n+r+1) mod N].
/// Aligning by an angle that tracks the feature's own rotation cancels the
/// orientation permutation. Differentiable w.r.t. the feature and theta.
GroupFeature orientation_align(const GroupFeature& feat, const Tensor& theta);

}  // namespace equikit
