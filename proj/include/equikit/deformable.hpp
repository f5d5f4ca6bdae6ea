// SPDX-License-Identifier: Apache-2.0
//
// Deformable convolution driven by vector-field offsets.
//
// There is no fixed base kernel grid here: the K sampling positions at a
// location p are exactly p plus the K offset vectors predicted at p, so the
// receptive field is the predicted point set itself. Field vectors live in a
// y-up frame while image rows grow downward, so a vector (vx, vy) is the
// pixel displacement (vx, -vy); this is what makes sampling commute with the
// rotation conventions of rotate_image and apply_rg_tg.
//
// RE-DCN keeps the orientation axis: every rotation group runs the same
// deformable convolution with shared offsets and weights, so the output is
// still cyclic-equivariant. RI-DCN first cancels the orientation permutation
// by aligning to a reference vector's angle, flattens the orientation axis
// into channels (no pooling, no capacity loss), and then samples; its output
// is invariant in the instance-level sense (values unchanged under input
// rotation, positions rotating with the image).

#pragma once

#include "equikit/group.hpp"
#include "equikit/tensor.hpp"
#include "equikit/vector_field.hpp"

namespace equikit {

/// Pixel displacement of a field vector (the y-up to row-down flip).
inline void field_vector_to_displacement(double vx, double vy, double& dx, double& dy) {
  dx = vx;
  dy = -vy;
}

struct RiDcnDiagnostics {
  int degenerate_ref_pixels = 0;  // reference vectors below magnitude 1e-8
};

/// Per-pixel angle of a 1-channel vector field via atan2(vy, vx) -> [H,W].
/// Pixels with magnitude below 1e-8 get angle 0 (counted in diagnostics) and
/// zero gradient. Differentiable w.r.t. the field elsewhere.
Tensor field_angle(const VectorField& ref, RiDcnDiagnostics* diag = nullptr);

/// Point-set sampling convolution on a plain [C,H,W] map:
///   out[co,p] = sum_k m_k(p) * sum_c weight[co,c,k] * input[c] at p+offset_k(p)
/// weight is [C_out,C,K]; modulation (optional) is [K,H,W], multiplied in as
/// given. Differentiable w.r.t. input, offsets, weight and modulation.
Tensor deform_sample_conv(const Tensor& input, const OffsetField& offsets, const Tensor& weight,
                          const Tensor& modulation);

/// Rotation-equivariant deformable convolution.
/// feat [C_in,N,H,W], offsets [K,2,H,W] shared across the N groups,
/// weight [C_out,C_in,K] shared across the N groups -> [C_out,N,H,W].
GroupFeature re_dcn(const GroupFeature& feat, const OffsetField& offsets, const Tensor& weight);

/// Rotation-invariant deformable convolution.
/// Aligns feat by the reference angle, flattens to C_in*N channels, applies
/// sigmoid modulation from a 1x1 conv on the aligned feature (skipped when
/// modulation_weight is undefined), then samples at the offset points.
/// feat [C_in,N,H,W], offsets [K,2,H,W], ref [1,2,H,W],
/// weight [C_out,C_in*N,K], modulation_weight [K,C_in*N] -> [C_out,H,W].
Tensor ri_dcn(const GroupFeature& feat, const OffsetField& offsets, const VectorField& ref,
              const Tensor& weight, const Tensor& modulation_weight,
              RiDcnDiagnostics* diag = nullptr);

}  // namespace equikit
