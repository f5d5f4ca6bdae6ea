// SPDX-License-Identifier: Apache-2.0

#include "equikit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "equikit/parallel.hpp"
#include "equikit/rng.hpp"
#include "equikit/tensor_ops.hpp"

namespace equikit {

namespace {

constexpr double kPi = 3.14159265358979323846;

Tensor random_tensor(Rng& rng, std::vector<int> shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  double* p = t.data();
  for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = rng.normal(0.0, scale);
  return t;
}

// 5-tap binomial blur per plane; smooth inputs for interpolation-limited checks.
Tensor smooth_tensor(Rng& rng, std::vector<int> shape, double scale = 1.0) {
  Tensor t = random_tensor(rng, shape, scale);
  const int rank = t.rank();
  const int h = t.dim(rank - 2), w = t.dim(rank - 1);
  const std::int64_t planes = t.numel() / (static_cast<std::int64_t>(h) * w);
  static const double kKernel[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  Tensor out(t.shape());
  std::vector<double> row(static_cast<std::size_t>(h) * w);
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const double* src = t.data() + pl * h * w;
    double* dst = out.data() + pl * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int dx = -2; dx <= 2; ++dx) {
          const int xx = std::clamp(x + dx, 0, w - 1);
          acc += kKernel[dx + 2] * src[y * w + xx];
        }
        row[y * w + x] = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int dy = -2; dy <= 2; ++dy) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          acc += kKernel[dy + 2] * row[yy * w + x];
        }
        dst[y * w + x] = acc;
      }
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::logic_error("commutator shapes differ");
  double m = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(pa[i] - pb[i]));
  return m;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  const double* p = a.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(p[i]));
  return m;
}

// One commutator evaluation: returns (max abs diff, reference magnitude).
struct CommutatorResult {
  double error = 0.0;
  double reference = 1.0;
};

using CheckFn = std::function<CommutatorResult(Rng&, int n, int g, bool smooth)>;

CommutatorResult check_conv_stride(Rng& rng, int, int g, bool even_no_pad) {
  // C_4-symmetrized kernel isolates the stride-grid effect from kernel
  // orientation.
  Tensor w = random_tensor(rng, {2, 1, 3, 3});
  Tensor w_sym(w.shape());
  for (int q = 0; q < 4; ++q) {
    Tensor r = rotate_image(w, q, 4);
    const double* pr = r.data();
    double* ps = w_sym.data();
    for (std::int64_t i = 0; i < w.numel(); ++i) ps[i] += 0.25 * pr[i];
  }
  Tensor x_even = random_tensor(rng, {1, 8, 8});
  Tensor x = even_no_pad ? x_even : pad_to_odd(x_even);
  Tensor lhs = conv2d(rotate_image(x, g, 4), w_sym, 2, 1);
  Tensor rhs = rotate_image(conv2d(x, w_sym, 2, 1), g, 4);
  return {max_abs_diff(lhs, rhs), std::max(max_abs(rhs), 1e-12)};
}

CommutatorResult check_lift_conv(Rng& rng, int n, int g, bool smooth) {
  Tensor x = smooth ? smooth_tensor(rng, {2, 9, 9}) : random_tensor(rng, {2, 9, 9});
  Tensor w = smooth ? smooth_tensor(rng, {3, 2, 3, 3}) : random_tensor(rng, {3, 2, 3, 3});
  Tensor lhs = lift_conv(rotate_image(x, g, n), w, 1, 1, n).tensor;
  Tensor rhs = act_group_feature(g, lift_conv(x, w, 1, 1, n)).tensor;
  return {max_abs_diff(lhs, rhs), std::max(max_abs(rhs), 1e-12)};
}

CommutatorResult check_group_conv(Rng& rng, int n, int g, bool smooth) {
  GroupFeature f(smooth ? smooth_tensor(rng, {2, n, 9, 9}) : random_tensor(rng, {2, n, 9, 9}));
  Tensor w = smooth ? smooth_tensor(rng, {2, 2, n, 3, 3}) : random_tensor(rng, {2, 2, n, 3, 3});
  Tensor lhs = group_conv(act_group_feature(g, f), w, 1, 1).tensor;
  Tensor rhs = act_group_feature(g, group_conv(f, w, 1, 1)).tensor;
  return {max_abs_diff(lhs, rhs), std::max(max_abs(rhs), 1e-12)};
}

CommutatorResult check_group_pool(Rng& rng, int n, int g, bool smooth) {
  GroupFeature f(smooth ? smooth_tensor(rng, {2, n, 9, 9}) : random_tensor(rng, {2, n, 9, 9}));
  Tensor lhs = group_pool(act_group_feature(g, f));
  Tensor rhs = rotate_image(group_pool(f), g, n);
  return {max_abs_diff(lhs, rhs), std::max(max_abs(rhs), 1e-12)};
}

CommutatorResult check_to_vector_field(Rng& rng, int n, int g, bool smooth) {
  GroupFeature f(smooth ? smooth_tensor(rng, {3, n, 9, 9}) : random_tensor(rng, {3, n, 9, 9}));
  Tensor lhs = to_vector_field(act_group_feature(g, f)).tensor;
  Tensor rhs = apply_rg_tg(g, to_vector_field(f), n).tensor;
  return {max_abs_diff(lhs, rhs), std::max(max_abs(rhs), 1e-12)};
}

CommutatorResult check_orientation_align(Rng& rng, int n, int g, bool smooth) {
  GroupFeature f(smooth ? smooth_tensor(rng, {2, n, 9, 9}) : random_tensor(rng, {2, n, 9, 9}));
  Tensor theta = random_tensor(rng, {9, 9}, 2.0);
  Tensor theta_rot = add_scalar(rotate_image(theta, g, n), 2.0 * kPi * g / n);
  Tensor lhs = orientation_align(act_group_feature(g, f), theta_rot).tensor;
  Tensor rhs = rotate_image(orientation_align(f, theta).tensor, g, n);
  return {max_abs_diff(lhs, rhs), std::max(max_abs(rhs), 1e-12)};
}

VectorField random_offsets(Rng& rng, int k, int h, int w, bool smooth, double scale) {
  Tensor t = smooth ? smooth_tensor(rng, {k, 2, h, w}, scale) : random_tensor(rng, {k, 2, h, w}, scale);
  return VectorField(t);
}

CommutatorResult check_re_dcn(Rng& rng, int n, int g, bool smooth) {
  const int k = 5;
  GroupFeature f(smooth ? smooth_tensor(rng, {2, n, 9, 9}) : random_tensor(rng, {2, n, 9, 9}));
  VectorField offs = random_offsets(rng, k, 9, 9, smooth, 1.0);
  Tensor w = random_tensor(rng, {2, 2, k});
  Tensor lhs = re_dcn(act_group_feature(g, f), apply_rg_tg(g, offs, n), w).tensor;
  Tensor rhs = act_group_feature(g, re_dcn(f, offs, w)).tensor;
  return {max_abs_diff(lhs, rhs), std::max(max_abs(rhs), 1e-12)};
}

CommutatorResult check_ri_dcn(Rng& rng, int n, int g, bool smooth) {
  const int k = 5, c = 2;
  GroupFeature f(smooth ? smooth_tensor(rng, {c, n, 9, 9}) : random_tensor(rng, {c, n, 9, 9}));
  VectorField offs = random_offsets(rng, k, 9, 9, smooth, 1.0);
  // reference field bounded away from zero magnitude
  Tensor rt = smooth_tensor(rng, {1, 2, 9, 9}, 0.3);
  {
    double* p = rt.data();
    const std::int64_t hw = 81;
    for (std::int64_t i = 0; i < hw; ++i) p[i] += 1.0;       // vx ~ 1
    for (std::int64_t i = hw; i < 2 * hw; ++i) p[i] += 0.4;  // vy ~ 0.4
  }
  VectorField ref(rt);
  Tensor w = random_tensor(rng, {3, c * n, k});
  Tensor mod_w = random_tensor(rng, {k, c * n}, 0.3);
  Tensor lhs = ri_dcn(act_group_feature(g, f), apply_rg_tg(g, offs, n), apply_rg_tg(g, ref, n), w,
                      mod_w);
  Tensor rhs = rotate_image(ri_dcn(f, offs, ref, w, mod_w), g, n);
  return {max_abs_diff(lhs, rhs), std::max(max_abs(rhs), 1e-12)};
}

CommutatorResult check_detector(Rng& rng, int n, int g, bool) {
  DetectorConfig cfg;
  cfg.group_order = n;
  cfg.num_points = 5;
  cfg.lift_channels = 2;
  cfg.trunk_channels = 3;
  cfg.num_classes = 2;
  DetectorModel model = make_detector(cfg, rng.next_u64());
  Tensor image = random_tensor(rng, {3, 17, 17}, 0.5);
  DetectorOutputs base = detector_forward(model, image);
  DetectorOutputs rot = detector_forward(model, rotate_image(image, g, n));
  const double point_err =
      max_abs_diff(rot.points.tensor, apply_rg_tg(g, base.points, n).tensor);
  const double logit_err = max_abs_diff(rot.logits, rotate_image(base.logits, g, n));
  const double ref = std::max({max_abs(base.points.tensor), max_abs(base.logits), 1e-12});
  return {std::max(point_err, logit_err), ref};
}

struct LayerSpec {
  const char* name;
  CheckFn fn;
  bool supports_45deg;  // include in the 5%-relative non-quarter suite
};

const std::vector<LayerSpec>& layer_specs() {
  static const std::vector<LayerSpec> specs = {
      {"lift_conv", check_lift_conv, true},
      {"group_conv", check_group_conv, true},
      {"group_pool", check_group_pool, true},
      {"to_vector_field", check_to_vector_field, false},  // argmax jumps under resampling
      {"orientation_align", check_orientation_align, true},
      {"re_dcn", check_re_dcn, true},
      {"ri_dcn", check_ri_dcn, true},
      {"detector", check_detector, false},
  };
  return specs;
}

}  // namespace

std::vector<std::string> registered_layer_checks() {
  std::vector<std::string> names = {"conv2d_stride2_odd", "conv2d_stride2_even_negative"};
  for (const auto& s : layer_specs()) names.push_back(s.name);
  return names;
}

EquivReport verify_equivariance(int group_order, int trials, std::uint64_t seed) {
  if (group_order != 4 && group_order != 8)
    throw std::invalid_argument("verify: group order must be 4 or 8");
  if (trials < 1) throw std::invalid_argument("verify: trials must be >= 1");
  const auto t_start = std::chrono::steady_clock::now();

  EquivReport report;
  report.group_order = group_order;
  report.trials = trials;

  const CyclicGroup group(group_order);
  auto run_check = [&](const std::string& name, const CheckFn& fn, int g, double tol,
                       bool relative, bool expected_fail, bool smooth) {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      Rng rng(seed + 7919 * t + 131 * g + std::hash<std::string>{}(name));
      const CommutatorResult r = fn(rng, group_order, g, smooth);
      const double err = relative ? r.error / r.reference : r.error;
      worst = std::max(worst, err);
    }
    EquivCheck c;
    c.layer = name;
    c.g = g;
    c.group_order = group_order;
    c.max_error = worst;
    c.tolerance = tol;
    c.relative = relative;
    c.expected_fail = expected_fail;
    c.pass = expected_fail ? worst > tol : worst < tol;
    report.checks.push_back(c);
  };

  // Strided-convolution grid effect, both directions.
  run_check("conv2d_stride2_odd",
            [](Rng& rng, int, int g, bool) { return check_conv_stride(rng, 0, g, false); }, 1,
            1e-10, false, false, false);
  run_check("conv2d_stride2_even_negative",
            [](Rng& rng, int, int g, bool) { return check_conv_stride(rng, 0, g, true); }, 1, 1e-3,
            false, true, false);

  for (const auto& spec : layer_specs()) {
    for (int g = 1; g < group_order; ++g) {
      if (group.is_quarter_turn(g)) {
        run_check(spec.name, spec.fn, g, 1e-8, false, false, false);
      } else if (g == 1 && spec.supports_45deg) {
        run_check(spec.name, spec.fn, g, 0.05, true, false, true);
      }
    }
  }

  report.pass = true;
  for (const auto& c : report.checks) report.pass = report.pass && c.pass;
  report.runtime_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

std::string EquivReport::to_json() const {
  nlohmann::json j;
  j["group_order"] = group_order;
  j["trials"] = trials;
  j["runtime_sec"] = runtime_sec;
  j["pass"] = pass;
  j["checks"] = nlohmann::json::array();
  for (const auto& c : checks) {
    nlohmann::json jc;
    jc["layer"] = c.layer;
    jc["g"] = c.g;
    jc["group_order"] = c.group_order;
    jc["max_error"] = c.max_error;
    jc["tolerance"] = c.tolerance;
    jc["relative"] = c.relative;
    jc["expected_fail"] = c.expected_fail;
    jc["pass"] = c.pass;
    j["checks"].push_back(jc);
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

std::vector<EpochLog> train_loop(const ForwardFn& forward, std::vector<NamedParam> params,
                                 const DetectorConfig& cfg,
                                 const std::vector<SyntheticScene>& scenes,
                                 const TrainOptions& opt) {
  if (scenes.empty()) throw std::invalid_argument("train: empty dataset");
  if (opt.epochs < 1 || opt.batch_size < 1) throw std::invalid_argument("train: bad options");

  for (auto& p : params) {
    p.value->set_requires_grad(true);
    p.value->zero_grad();
  }
  std::vector<std::vector<double>> velocity(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    velocity[i].assign(static_cast<std::size_t>(params[i].value->numel()), 0.0);

  Rng shuffle_rng(opt.seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<int> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochLog> log;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    double lr = opt.lr;
    for (double frac : opt.milestones)
      if (epoch > frac * opt.epochs) lr *= opt.decay_factor;

    // Fisher-Yates, fixed stream
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);

    EpochLog el;
    el.epoch = epoch;
    el.lr = lr;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opt.batch_size);
      const int count = static_cast<int>(stop - start);
      for (std::size_t s = start; s < stop; ++s) {
        const SyntheticScene& scene = scenes[order[s]];
        Tape tape;
        Tape::Scope scope(tape);
        DetectorOutputs out = forward(scene.image);
        LossBreakdown lb = total_loss(out, scene.objects, cfg);
        if (!std::isfinite(lb.total.item()))
          throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                   std::to_string(epoch));
        tape.backward(lb.total);
        el.loss += lb.total.item();
        el.focal += lb.focal;
        el.loc += lb.loc;
        el.positives += lb.positives;
      }
      double clip_scale = 1.0 / count;
      if (opt.clip_grad_norm > 0.0) {
        double sq = 0.0;
        for (auto& p : params) {
          const double* g = p.value->grad();
          for (std::int64_t j = 0; j < p.value->numel(); ++j) sq += g[j] * g[j];
        }
        const double norm = std::sqrt(sq) / count;
        if (norm > opt.clip_grad_norm) clip_scale *= opt.clip_grad_norm / norm;
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = *params[i].value;
        double* g = w.grad();
        double* v = velocity[i].data();
        double* pw = w.data();
        for (std::int64_t j = 0; j < w.numel(); ++j) {
          v[j] = opt.momentum * v[j] + g[j] * clip_scale;
          pw[j] -= lr * v[j];
        }
        w.zero_grad();
      }
      ++batches;
    }
    const double inv_n = 1.0 / static_cast<double>(order.size());
    el.loss *= inv_n;
    el.focal *= inv_n;
    el.loc *= inv_n;
    (void)batches;
    log.push_back(el);
    if (opt.verbose)
      std::fprintf(stderr, "epoch %3d lr %.4f loss %.4f (focal %.4f loc %.4f) pos %d\n", el.epoch,
                   el.lr, el.loss, el.focal, el.loc, el.positives);
  }
  return log;
}

std::vector<EpochLog> train_detector(DetectorModel& model,
                                     const std::vector<SyntheticScene>& scenes,
                                     const TrainOptions& opt) {
  return train_loop([&model](const Tensor& img) { return detector_forward(model, img); },
                    model.parameters(), model.cfg, scenes, opt);
}

std::vector<EpochLog> train_baseline(BaselineModel& model,
                                     const std::vector<SyntheticScene>& scenes,
                                     const TrainOptions& opt) {
  return train_loop([&model](const Tensor& img) { return baseline_forward(model, img); },
                    model.parameters(), model.cfg, scenes, opt);
}

std::string train_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,lr,loss,focal,loc,positives\n";
  os.precision(10);
  for (const auto& e : log)
    os << e.epoch << "," << e.lr << "," << e.loss << "," << e.focal << "," << e.loc << ","
       << e.positives << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

struct ScenePredictions {
  std::vector<Detection> detections;
  std::vector<SceneObject> ground_truth;
};

double ap_11point(std::vector<std::pair<double, bool>>& scored_hits, int total_gt) {
  if (total_gt == 0) return -1.0;
  std::stable_sort(scored_hits.begin(), scored_hits.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const auto& [score, hit] : scored_hits) {
    (void)score;
    hit ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / total_gt);
  }
  double ap = 0.0;
  for (int i = 0; i <= 10; ++i) {
    const double r = i / 10.0;
    double p_max = 0.0;
    for (std::size_t j = 0; j < recall.size(); ++j)
      if (recall[j] >= r) p_max = std::max(p_max, precision[j]);
    ap += p_max / 11.0;
  }
  return ap;
}

// Greedy matching at one IoU threshold for one class; returns (score, is_tp)
// pairs plus the gt count.
void match_class(const std::vector<ScenePredictions>& scenes, int class_id, double iou_thresh,
                 std::vector<std::pair<double, bool>>& scored_hits, int& total_gt) {
  scored_hits.clear();
  total_gt = 0;
  struct Rec {
    double score;
    int scene;
    int det;
  };
  std::vector<Rec> recs;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    for (std::size_t di = 0; di < scenes[si].detections.size(); ++di)
      if (scenes[si].detections[di].class_id == class_id)
        recs.push_back({scenes[si].detections[di].score, static_cast<int>(si), static_cast<int>(di)});
    for (const auto& gt : scenes[si].ground_truth)
      if (gt.class_id == class_id) ++total_gt;
  }
  std::stable_sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) { return a.score > b.score; });

  std::vector<std::vector<char>> used(scenes.size());
  for (std::size_t si = 0; si < scenes.size(); ++si)
    used[si].assign(scenes[si].ground_truth.size(), 0);

  for (const auto& r : recs) {
    const auto& det = scenes[r.scene].detections[r.det];
    const auto det_poly = det.box.polygon();
    double best_iou = 0.0;
    int best_gt = -1;
    const auto& gts = scenes[r.scene].ground_truth;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (gts[gi].class_id != class_id || used[r.scene][gi]) continue;
      const double iou = geo::polygon_iou(det_poly, gts[gi].box.polygon());
      if (iou > best_iou) {
        best_iou = iou;
        best_gt = static_cast<int>(gi);
      }
    }
    if (best_gt >= 0 && best_iou >= iou_thresh) {
      used[r.scene][best_gt] = 1;
      scored_hits.push_back({r.score, true});
    } else {
      scored_hits.push_back({r.score, false});
    }
  }
}

}  // namespace

EvalResult evaluate(const ForwardFn& forward, const DetectorConfig& cfg,
                    const std::vector<SyntheticScene>& scenes, double rotation_rad) {
  if (scenes.empty()) throw std::invalid_argument("evaluate: empty dataset");

  std::vector<ScenePredictions> preds(scenes.size());
  parallel_for(static_cast<int>(scenes.size()), [&](int i) {
    const SyntheticScene& scene = scenes[i];
    Tensor image = scene.image;
    std::vector<SceneObject> gts = scene.objects;
    if (rotation_rad != 0.0) {
      image = rotate_image_radians(image, rotation_rad);
      const int h = image.dim(1), w = image.dim(2);
      for (auto& o : gts) o.box = geo::rotate_box(o.box, rotation_rad, h, w);
    }
    preds[i].detections = decode_detections(forward(image), cfg);
    preds[i].ground_truth = std::move(gts);
  });

  EvalResult res;
  res.scenes = static_cast<int>(scenes.size());
  res.ap50.assign(cfg.num_classes, -1.0);
  res.ap75.assign(cfg.num_classes, -1.0);
  double sum50 = 0.0, sum75 = 0.0;
  int classes_with_gt = 0;
  for (int c = 0; c < cfg.num_classes; ++c) {
    std::vector<std::pair<double, bool>> hits;
    int total_gt = 0;
    match_class(preds, c, 0.5, hits, total_gt);
    res.ap50[c] = ap_11point(hits, total_gt);
    match_class(preds, c, 0.75, hits, total_gt);
    res.ap75[c] = ap_11point(hits, total_gt);
    res.total_gt += total_gt;
    if (total_gt > 0) {
      ++classes_with_gt;
      sum50 += res.ap50[c];
      sum75 += res.ap75[c];
    }
  }
  if (classes_with_gt > 0) {
    res.map50 = sum50 / classes_with_gt;
    res.map75 = sum75 / classes_with_gt;
  }
  return res;
}

std::string EvalResult::to_json() const {
  nlohmann::json j;
  j["map50"] = map50;
  j["map75"] = map75;
  j["ap50"] = ap50;
  j["ap75"] = ap75;
  j["scenes"] = scenes;
  j["total_gt"] = total_gt;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Rotation sweep
// ---------------------------------------------------------------------------

std::vector<SweepPoint> rotation_sweep(const ForwardFn& model, const DetectorConfig& cfg,
                                       const ForwardFn* baseline,
                                       const DetectorConfig* baseline_cfg,
                                       const std::vector<SyntheticScene>& scenes,
                                       double step_deg) {
  if (step_deg <= 0.0) throw std::invalid_argument("sweep: step must be positive");
  std::vector<double> angles;
  for (double a = 0.0; a < 360.0 - 1e-9; a += step_deg) angles.push_back(a);

  std::vector<SweepPoint> rows(angles.size());
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const double rad = angles[i] * kPi / 180.0;
    SweepPoint p;
    p.angle_deg = angles[i];
    p.map50 = evaluate(model, cfg, scenes, rad).map50;
    if (baseline) p.baseline_map50 = evaluate(*baseline, *baseline_cfg, scenes, rad).map50;
    rows[i] = p;
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepPoint>& rows) {
  std::ostringstream os;
  os << "angle_deg,map50,baseline_map50\n";
  os.precision(10);
  for (const auto& r : rows) {
    os << r.angle_deg << "," << r.map50 << ",";
    if (r.baseline_map50 >= 0.0) os << r.baseline_map50;
    os << "\n";
  }
  return os.str();
}

}  // namespace equikit
