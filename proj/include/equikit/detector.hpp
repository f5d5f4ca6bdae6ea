// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale fully rotation-equivariant oriented-object detector.
//
// Pipeline: lifting conv + two strided group convs (backbone at stride 4),
// then two branches on the shared feature:
//   localization - three group convs, a vector-field head predicting K
//     offset vectors per cell, an RE-DCN refinement block whose sampling
//     offsets are those very points, and a second vector-field head whose
//     output refines the points residually;
//   classification - three group convs, then RI-DCN aligned by the angle of
//     the reference vector (point 0 minus the hull center of the point set),
//     and a 1x1 logits head.
// Rotating the input image permutes grid cells spatially, rotates every
// predicted point set in parallel, and leaves matched class logits unchanged.
//
// Ablation switches mirror the incremental-equivariance study: the
// localization head can drop the vector-field transform (plain channels),
// and the classification branch can align (OA), pool (GroupPool) or just
// flatten the orientation axis. A channel-matched baseline with plain convs
// and a fixed 3x3 deformable grid serves as the non-equivariant control.

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "equikit/deformable.hpp"
#include "equikit/geometry.hpp"
#include "equikit/group.hpp"
#include "equikit/synthetic.hpp"
#include "equikit/tensor.hpp"
#include "equikit/vector_field.hpp"

namespace equikit {

enum class ClsMode { kFlatten, kGroupPool, kOrientationAlign };

struct AblationSwitches {
  bool vector_field = true;
  ClsMode cls_mode = ClsMode::kOrientationAlign;
  bool edge_constraint = true;
};

struct DetectorConfig {
  int group_order = 8;  // N in {4, 8}
  int num_points = 9;   // K >= 3
  int num_classes = 3;
  int lift_channels = 8;
  int trunk_channels = 16;
  double lambda_ec = 0.025;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double score_threshold = 0.05;
  double nms_iou = 0.5;
  AblationSwitches ablation;

  int stride() const { return 4; }  // two stride-2 stages
  void validate() const;
};

std::string config_to_json(const DetectorConfig& cfg);
DetectorConfig config_from_json(const std::string& json_text);

/// Named parameter with checkpoint metadata.
struct NamedParam {
  std::string name;
  std::string layer;
  std::string role;
  int group_order = 1;
  Tensor* value = nullptr;
};

// ---------------------------------------------------------------------------
// Equivariant detector
// ---------------------------------------------------------------------------

struct DetectorModel {
  DetectorConfig cfg;

  // backbone
  Tensor lift_w, lift_b;
  Tensor down1_w, down1_b;
  Tensor down2_w, down2_b;
  // localization branch
  std::array<Tensor, 3> loc_w, loc_b;
  Tensor vf0_w, vf0_b;
  Tensor redcn_w;
  Tensor vf1_w, vf1_b;
  // classification branch
  std::array<Tensor, 3> cls_w, cls_b;
  Tensor cls_dcn_w, cls_mod_w;
  Tensor logits_w, logits_b;

  std::vector<NamedParam> parameters();
  std::int64_t parameter_count() const;
};

DetectorModel make_detector(const DetectorConfig& cfg, std::uint64_t seed);

struct DetectorOutputs {
  VectorField points;  // [K,2,H',W'] per-cell offset vectors, feature-grid units
  Tensor logits;       // [num_classes,H',W']
  int grid_h = 0, grid_w = 0;
  RiDcnDiagnostics diag;
};

/// Full forward pass; image [3,H,W] (padded to odd sizes at entry).
DetectorOutputs detector_forward(DetectorModel& model, const Tensor& image);

/// Reference vector field for orientation alignment: per cell, point 0's
/// vector minus the hull center of the point set's vectors (mean fallback at
/// degenerate cells). Rotation-equivariant because the area centroid
/// commutes with the rotation acting on the vectors.
VectorField reference_field(const VectorField& points);

// ---------------------------------------------------------------------------
// Channel-matched non-equivariant baseline (plain convs, fixed 3x3 DCN grid)
// ---------------------------------------------------------------------------

struct BaselineModel {
  DetectorConfig cfg;  // group_order channels are folded into plain widths

  Tensor stem_w, stem_b;
  Tensor down1_w, down1_b;
  Tensor down2_w, down2_b;
  std::array<Tensor, 3> loc_w, loc_b;
  Tensor off_w, off_b;  // residual offsets on the fixed 3x3 grid
  Tensor loc_dcn_w;
  Tensor vf1_w, vf1_b;
  std::array<Tensor, 3> cls_w, cls_b;
  Tensor cls_dcn_w, cls_mod_w;
  Tensor logits_w, logits_b;

  std::vector<NamedParam> parameters();
  std::int64_t parameter_count() const;
};

BaselineModel make_baseline(const DetectorConfig& cfg, std::uint64_t seed);
DetectorOutputs baseline_forward(BaselineModel& model, const Tensor& image);

// ---------------------------------------------------------------------------
// Targets, losses, decoding
// ---------------------------------------------------------------------------

struct Assignment {
  std::vector<int> cls;       // per cell: class id, -1 = background
  std::vector<int> gt_index;  // per cell: object index, -1 = background
  int positives = 0;
};

/// A cell is positive for the box containing its center; nested boxes go to
/// the smallest area. Cell (i,j) sits at image position (stride*j, stride*i).
Assignment assign_targets(int grid_h, int grid_w, int stride,
                          const std::vector<SceneObject>& objects);

/// Focal loss, mean over cells of the per-class sum.
/// FL(p_t) = -alpha_t (1-p_t)^gamma log(p_t) on sigmoid scores.
Tensor focal_loss(const Tensor& logits, const std::vector<int>& cell_class, double gamma,
                  double alpha);

struct LocLossStats {
  double giou_term = 0.0;
  double ec_term = 0.0;
  int positives = 0;
  int degenerate_hulls = 0;
};

/// Localization loss over positive cells: mean of
///   (1 - giou(hull(points), gt)) + lambda_ec * ||point0 - nearest gt edge midpoint||
/// with exact gradients into the point tensor. Point k of cell (i,j) decodes
/// to image position (stride*(j + vx_k), stride*(i - vy_k)).
Tensor localization_loss(const VectorField& points, const Assignment& assignment,
                         const std::vector<SceneObject>& objects, int stride, double lambda_ec,
                         bool use_edge_constraint, LocLossStats* stats = nullptr);

struct LossBreakdown {
  Tensor total;
  double focal = 0.0;
  double loc = 0.0;
  int positives = 0;
};

LossBreakdown total_loss(const DetectorOutputs& out, const std::vector<SceneObject>& objects,
                         const DetectorConfig& cfg, LocLossStats* loc_stats = nullptr);

struct Detection {
  geo::OrientedBox box;
  int class_id = 0;
  double score = 0.0;
  std::vector<geo::Vec2<double>> point_set;  // decoded image-space points
};

/// Score threshold, point-set decode (hull + min-area rect), class-wise
/// rotated NMS; deterministic, sorted by descending score.
std::vector<Detection> decode_detections(const DetectorOutputs& out, const DetectorConfig& cfg);

/// Image-space positions of one cell's point set.
std::vector<geo::Vec2<double>> decode_cell_points(const VectorField& points, int cell_y,
                                                  int cell_x, int stride);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_detector(const std::string& stem, DetectorModel& model);
DetectorModel load_detector(const std::string& path);
void save_baseline(const std::string& stem, BaselineModel& model);
BaselineModel load_baseline(const std::string& path);

/// True if the checkpoint at `path` holds a baseline model.
bool checkpoint_is_baseline(const std::string& path);

}  // namespace equikit
