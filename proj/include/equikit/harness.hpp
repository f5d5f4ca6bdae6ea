// SPDX-License-Identifier: Apache-2.0
//
// Certification and experiment harness: numeric equivariance checks for every
// layer class, the training loop, AP evaluation with analytic ground-truth
// rotation, and the rotation-robustness sweep.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "equikit/detector.hpp"
#include "equikit/synthetic.hpp"

namespace equikit {

// ---------------------------------------------------------------------------
// Equivariance certification
// ---------------------------------------------------------------------------

struct EquivCheck {
  std::string layer;
  int g = 0;
  int group_order = 4;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool relative = false;       // error normalized by the reference magnitude
  bool expected_fail = false;  // negative control: must exceed the tolerance
  bool pass = false;
};

struct EquivReport {
  int group_order = 4;
  int trials = 0;
  double runtime_sec = 0.0;
  std::vector<EquivCheck> checks;
  bool pass = false;

  std::string to_json() const;
};

/// Every layer class with a registered commutation relation. The report
/// always covers this whole list.
std::vector<std::string> registered_layer_checks();

/// Runs `trials` random inputs per layer; quarter-turn group elements are
/// checked at absolute tolerance, non-quarter elements (order 8) at 5%
/// relative on smoothed inputs. Includes the deliberate negative control:
/// stride-2 convolution on an even-sized input without pad_to_odd must fail.
EquivReport verify_equivariance(int group_order, int trials, std::uint64_t seed = 20240101);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
  int epochs = 20;
  int batch_size = 4;
  double lr = 0.02;
  double momentum = 0.9;
  double decay_factor = 0.1;
  std::vector<double> milestones = {0.7, 0.9};  // fractions of total epochs
  double clip_grad_norm = 10.0;                 // global L2 clip; <= 0 disables
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double focal = 0.0;
  double loc = 0.0;
  int positives = 0;
};

using ForwardFn = std::function<DetectorOutputs(const Tensor&)>;

/// Deterministic SGD-with-momentum loop (fixed shuffle per seed, sequential
/// batches). Throws std::runtime_error on divergence (non-finite loss).
std::vector<EpochLog> train_loop(const ForwardFn& forward, std::vector<NamedParam> params,
                                 const DetectorConfig& cfg,
                                 const std::vector<SyntheticScene>& scenes,
                                 const TrainOptions& opt);

std::vector<EpochLog> train_detector(DetectorModel& model,
                                     const std::vector<SyntheticScene>& scenes,
                                     const TrainOptions& opt);
std::vector<EpochLog> train_baseline(BaselineModel& model,
                                     const std::vector<SyntheticScene>& scenes,
                                     const TrainOptions& opt);

std::string train_log_csv(const std::vector<EpochLog>& log);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  double map50 = 0.0;
  double map75 = 0.0;
  std::vector<double> ap50;  // per class; -1 when the class has no ground truth
  std::vector<double> ap75;
  int scenes = 0;
  int total_gt = 0;

  std::string to_json() const;
};

/// 11-point interpolated AP at IoU 0.5 / 0.75 with polygon IoU matching.
/// rotation_rad rotates each image about its center (zero fill) and the
/// ground-truth corners analytically.
EvalResult evaluate(const ForwardFn& forward, const DetectorConfig& cfg,
                    const std::vector<SyntheticScene>& scenes, double rotation_rad);

// ---------------------------------------------------------------------------
// Rotation sweep
// ---------------------------------------------------------------------------

struct SweepPoint {
  double angle_deg = 0.0;
  double map50 = 0.0;
  double baseline_map50 = -1.0;  // < 0 when no baseline was given
};

std::vector<SweepPoint> rotation_sweep(const ForwardFn& model, const DetectorConfig& cfg,
                                       const ForwardFn* baseline,
                                       const DetectorConfig* baseline_cfg,
                                       const std::vector<SyntheticScene>& scenes,
                                       double step_deg);

std::string sweep_csv(const std::vector<SweepPoint>& rows);

}  // namespace equikit
