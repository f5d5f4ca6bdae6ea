// SPDX-License-Identifier: Apache-2.0
//
// Rotation-equivariant 2-D vector fields derived from orientation-indexed
// features: per pixel, the max response over orientations times the unit
// vector of the argmax angle. Under the group action the response values
// travel with the spatial rotation while the argmax index shifts, so the
// decoded vectors rotate in parallel with the image.

#pragma once

#include "equikit/group.hpp"
#include "equikit/tensor.hpp"

namespace equikit {

struct VectorField {
  Tensor tensor;  // [K, 2, H, W]; components (vx, vy) per pixel

  VectorField() = default;
  explicit VectorField(Tensor t) : tensor(std::move(t)) {
    if (tensor.rank() != 4 || tensor.dim(1) != 2)
      throw std::invalid_argument("vector field must be [K,2,H,W], got " +
                                  shape_str(tensor.shape()));
  }
  int channels() const { return tensor.dim(0); }
  int height() const { return tensor.dim(2); }
  int width() const { return tensor.dim(3); }
};

/// Offset fields are vector fields whose K channels are read as absolute
/// sampling displacements (in pixels) from each spatial location.
using OffsetField = VectorField;

/// cos/sin of 2*pi*g/N, exact (0/+-1) at quarter turns so that quarter-turn
/// identities hold bit for bit.
void unit_direction(int g_index, int group_order, double& c, double& s);

/// v = (max_n feat[k,n]) * [cos(theta), sin(theta)], theta = 2*pi*argmax/N.
/// Ties break to the lowest orientation index. Gradient flows through the max
/// response only; the argmax angle is treated as locally constant.
VectorField to_vector_field(const GroupFeature& feat);

/// Reference action on vector fields: spatial rotation of the field by
/// 2*pi*g/N together with rotation of every (vx,vy) by the same angle.
/// Test oracle; exact at quarter turns.
VectorField apply_rg_tg(int g_index, const VectorField& field, int group_order);

}  // namespace equikit
