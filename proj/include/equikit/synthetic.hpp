// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic scenes for desk-scale detection: rotated
// rectangles, ellipses and triangles on a noisy background, rendered with
// 4x4 supersampled coverage. Ground-truth oriented boxes are the shapes'
// generating rectangles, exact by construction. Regenerating a scene from
// the same seed is bit-identical.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "equikit/geometry.hpp"
#include "equikit/tensor.hpp"

namespace equikit {

struct SceneConfig {
  int height = 65;
  int width = 129;
  int num_classes = 3;  // shape kinds cycle: rectangle, ellipse, triangle
  int min_objects = 1;
  int max_objects = 3;
  double min_size = 8.0;   // long side, px
  double max_size = 40.0;
  double min_aspect = 1.3;
  double max_aspect = 2.8;
  double angle_min = 0.0;               // object angle range, radians
  double angle_max = 6.28318530717958647692;
  bool rotation_safe = false;  // confine objects to the inscribed disk so the
                               // whole scene stays visible under any canvas rotation
  double margin = 3.0;

  void validate() const;
};

struct SceneObject {
  geo::OrientedBox box;
  int class_id = 0;
};

struct SyntheticScene {
  Tensor image;  // [3,H,W], values in [0,1]
  std::vector<SceneObject> objects;
  std::uint64_t seed = 0;
};

SyntheticScene gen_scene(std::uint64_t seed, const SceneConfig& cfg);

/// count scenes with per-scene seeds base_seed + i.
std::vector<SyntheticScene> gen_scenes(std::uint64_t base_seed, int count, const SceneConfig& cfg);

/// Fraction of the ground-truth box actually covered by the shape.
double shape_fill_factor(int class_id);

// Dataset directory layout: scene_XXXXX.eqtn (image tensor), scene_XXXXX.txt
// (ground-truth boxes in the OBB text format) and manifest.json.
void save_dataset(const std::string& dir, const std::vector<SyntheticScene>& scenes);
std::vector<SyntheticScene> load_dataset(const std::string& dir);

}  // namespace equikit
