// SPDX-License-Identifier: Apache-2.0

#include "equikit/detector.hpp"

#include <cmath>
#include <json.hpp>

#include "equikit/rng.hpp"
#include "equikit/serialize.hpp"
#include "equikit/tensor_ops.hpp"

namespace equikit {

namespace {

const char* cls_mode_name(ClsMode m) {
  switch (m) {
    case ClsMode::kFlatten: return "flatten";
    case ClsMode::kGroupPool: return "group_pool";
    default: return "orientation_align";
  }
}

ClsMode cls_mode_from_name(const std::string& s) {
  if (s == "flatten") return ClsMode::kFlatten;
  if (s == "group_pool") return ClsMode::kGroupPool;
  if (s == "orientation_align") return ClsMode::kOrientationAlign;
  throw std::invalid_argument("unknown cls_mode: " + s);
}

Tensor he_init(Rng& rng, std::vector<int> shape, double fan_in, double gain = 1.0) {
  Tensor t(std::move(shape));
  const double std_dev = gain * std::sqrt(2.0 / fan_in);
  double* p = t.data();
  for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = rng.normal(0.0, std_dev);
  return t;
}

Tensor small_init(Rng& rng, std::vector<int> shape, double std_dev) {
  Tensor t(std::move(shape));
  double* p = t.data();
  for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = rng.normal(0.0, std_dev);
  return t;
}

GroupFeature gconv_block(const GroupFeature& f, const Tensor& w, const Tensor& b, int stride) {
  GroupFeature g = group_conv(f, w, stride, 1);
  return GroupFeature(relu(add_channel_bias(g.tensor, b)));
}

Tensor conv_block(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  return relu(add_channel_bias(conv2d(x, w, stride, 1), b));
}

}  // namespace

void DetectorConfig::validate() const {
  if (group_order != 4 && group_order != 8)
    throw std::invalid_argument("detector: group order must be 4 or 8");
  if (num_points < 3) throw std::invalid_argument("detector: need at least 3 points");
  if (num_classes < 1) throw std::invalid_argument("detector: need at least one class");
  if (lift_channels < 1 || trunk_channels < 1)
    throw std::invalid_argument("detector: channel counts must be positive");
}

std::string config_to_json(const DetectorConfig& cfg) {
  nlohmann::json j;
  j["group_order"] = cfg.group_order;
  j["num_points"] = cfg.num_points;
  j["num_classes"] = cfg.num_classes;
  j["lift_channels"] = cfg.lift_channels;
  j["trunk_channels"] = cfg.trunk_channels;
  j["lambda_ec"] = cfg.lambda_ec;
  j["focal_gamma"] = cfg.focal_gamma;
  j["focal_alpha"] = cfg.focal_alpha;
  j["score_threshold"] = cfg.score_threshold;
  j["nms_iou"] = cfg.nms_iou;
  j["ablation"]["vector_field"] = cfg.ablation.vector_field;
  j["ablation"]["cls_mode"] = cls_mode_name(cfg.ablation.cls_mode);
  j["ablation"]["edge_constraint"] = cfg.ablation.edge_constraint;
  return j.dump();
}

DetectorConfig config_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  DetectorConfig cfg;
  cfg.group_order = j.value("group_order", cfg.group_order);
  cfg.num_points = j.value("num_points", cfg.num_points);
  cfg.num_classes = j.value("num_classes", cfg.num_classes);
  cfg.lift_channels = j.value("lift_channels", cfg.lift_channels);
  cfg.trunk_channels = j.value("trunk_channels", cfg.trunk_channels);
  cfg.lambda_ec = j.value("lambda_ec", cfg.lambda_ec);
  cfg.focal_gamma = j.value("focal_gamma", cfg.focal_gamma);
  cfg.focal_alpha = j.value("focal_alpha", cfg.focal_alpha);
  cfg.score_threshold = j.value("score_threshold", cfg.score_threshold);
  cfg.nms_iou = j.value("nms_iou", cfg.nms_iou);
  if (j.contains("ablation")) {
    const auto& a = j["ablation"];
    cfg.ablation.vector_field = a.value("vector_field", cfg.ablation.vector_field);
    cfg.ablation.cls_mode =
        cls_mode_from_name(a.value("cls_mode", std::string(cls_mode_name(cfg.ablation.cls_mode))));
    cfg.ablation.edge_constraint = a.value("edge_constraint", cfg.ablation.edge_constraint);
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Model construction
// ---------------------------------------------------------------------------

DetectorModel make_detector(const DetectorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DetectorModel m;
  m.cfg = cfg;
  Rng rng(seed);
  const int n = cfg.group_order, k = cfg.num_points;
  const int c0 = cfg.lift_channels, c1 = cfg.trunk_channels;
  const int ncls = cfg.num_classes;

  m.lift_w = he_init(rng, {c0, 3, 3, 3}, 3.0 * 9.0);
  m.lift_b = Tensor({c0});
  m.down1_w = he_init(rng, {c1, c0, n, 3, 3}, c0 * n * 9.0);
  m.down1_b = Tensor({c1});
  m.down2_w = he_init(rng, {c1, c1, n, 3, 3}, c1 * n * 9.0);
  m.down2_b = Tensor({c1});
  for (int i = 0; i < 3; ++i) {
    m.loc_w[i] = he_init(rng, {c1, c1, n, 3, 3}, c1 * n * 9.0);
    m.loc_b[i] = Tensor({c1});
    m.cls_w[i] = he_init(rng, {c1, c1, n, 3, 3}, c1 * n * 9.0);
    m.cls_b[i] = Tensor({c1});
  }

  // Vector-field heads: small weights so the argmax directions come from the
  // data, plus a positive response bias (constant across orientations, hence
  // equivariance-safe) so the initial point sets form a spread cloud of about
  // one feature pixel instead of a degenerate dot with no hull gradient.
  if (cfg.ablation.vector_field) {
    m.vf0_w = small_init(rng, {k, c1, n, 3, 3}, 0.05);
    m.vf0_b = Tensor::full({k}, 1.5);
    m.redcn_w = he_init(rng, {c1, c1, k}, c1 * static_cast<double>(k));
    m.vf1_w = small_init(rng, {k, c1, n, 3, 3}, 0.05);
    m.vf1_b = Tensor({k});
  } else {
    // Plain coordinate channels: biases place the initial points on a ring so
    // the baseline starts from a comparable spread.
    m.vf0_w = small_init(rng, {2 * k, c1 * n, 1, 1}, 0.05);
    m.vf0_b = Tensor({2 * k});
    for (int i = 0; i < k; ++i) {
      const double a = 2.0 * 3.14159265358979323846 * i / k;
      m.vf0_b.data()[2 * i] = std::cos(a);
      m.vf0_b.data()[2 * i + 1] = std::sin(a);
    }
    m.redcn_w = he_init(rng, {c1 * n, c1 * n, k}, c1 * n * static_cast<double>(k));
    m.vf1_w = small_init(rng, {2 * k, c1 * n, 1, 1}, 0.05);
    m.vf1_b = Tensor({2 * k});
  }

  const int cls_in = cfg.ablation.cls_mode == ClsMode::kGroupPool ? c1 : c1 * n;
  m.cls_dcn_w = he_init(rng, {c1, cls_in, k}, cls_in * static_cast<double>(k));
  m.cls_mod_w = Tensor({k, cls_in});  // zero logits -> 0.5 modulation at start
  m.logits_w = he_init(rng, {ncls, c1, 1, 1}, c1);
  m.logits_b = Tensor::full({ncls}, -2.0);  // mild rare-positive prior
  return m;
}

std::vector<NamedParam> DetectorModel::parameters() {
  const int n = cfg.group_order;
  std::vector<NamedParam> ps;
  auto push = [&](const char* name, const char* layer, const char* role, Tensor& t, int order) {
    if (t.defined()) ps.push_back({name, layer, role, order, &t});
  };
  push("backbone.lift.weight", "lift_conv", "weight", lift_w, n);
  push("backbone.lift.bias", "lift_conv", "bias", lift_b, n);
  push("backbone.down1.weight", "group_conv", "weight", down1_w, n);
  push("backbone.down1.bias", "group_conv", "bias", down1_b, n);
  push("backbone.down2.weight", "group_conv", "weight", down2_w, n);
  push("backbone.down2.bias", "group_conv", "bias", down2_b, n);
  static const char* loc_names[3][2] = {{"loc.conv1.weight", "loc.conv1.bias"},
                                        {"loc.conv2.weight", "loc.conv2.bias"},
                                        {"loc.conv3.weight", "loc.conv3.bias"}};
  static const char* cls_names[3][2] = {{"cls.conv1.weight", "cls.conv1.bias"},
                                        {"cls.conv2.weight", "cls.conv2.bias"},
                                        {"cls.conv3.weight", "cls.conv3.bias"}};
  for (int i = 0; i < 3; ++i) {
    push(loc_names[i][0], "group_conv", "weight", loc_w[i], n);
    push(loc_names[i][1], "group_conv", "bias", loc_b[i], n);
  }
  push("loc.vf0.weight", cfg.ablation.vector_field ? "group_conv" : "conv2d", "weight", vf0_w, n);
  push("loc.vf0.bias", cfg.ablation.vector_field ? "group_conv" : "conv2d", "bias", vf0_b, n);
  push("loc.redcn.weight", cfg.ablation.vector_field ? "re_dcn" : "deform_conv", "weight", redcn_w, n);
  push("loc.vf1.weight", cfg.ablation.vector_field ? "group_conv" : "conv2d", "weight", vf1_w, n);
  push("loc.vf1.bias", cfg.ablation.vector_field ? "group_conv" : "conv2d", "bias", vf1_b, n);
  for (int i = 0; i < 3; ++i) {
    push(cls_names[i][0], "group_conv", "weight", cls_w[i], n);
    push(cls_names[i][1], "group_conv", "bias", cls_b[i], n);
  }
  const char* cls_layer = cfg.ablation.cls_mode == ClsMode::kOrientationAlign ? "ri_dcn" : "deform_conv";
  push("cls.dcn.weight", cls_layer, "weight", cls_dcn_w, n);
  push("cls.dcn.modulation", cls_layer, "modulation", cls_mod_w, n);
  push("cls.logits.weight", "conv2d", "weight", logits_w, n);
  push("cls.logits.bias", "conv2d", "bias", logits_b, n);
  return ps;
}

std::int64_t DetectorModel::parameter_count() const {
  auto& self = const_cast<DetectorModel&>(*this);
  std::int64_t total = 0;
  for (auto& p : self.parameters()) total += p.value->numel();
  return total;
}

// ---------------------------------------------------------------------------
// Reference field (point 0 minus hull center, in vector space)
// ---------------------------------------------------------------------------

namespace {

// Shared by the double and Dual paths so both take identical branches.
template <class T>
void reference_from_vectors(const std::vector<geo::Vec2<T>>& pts, geo::Vec2<T>& ref,
                            bool& degenerate) {
  degenerate = false;
  try {
    const auto hull = geo::convex_hull(pts);
    const auto center = geo::hull_center(hull);
    ref = pts[0] - center;
    return;
  } catch (const std::domain_error&) {
    degenerate = true;
  }
  // Mean fallback keeps the map total and still commutes with rotations.
  T mx = T(0.0), my = T(0.0);
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  const T inv = T(1.0 / static_cast<double>(pts.size()));
  ref = {pts[0].x - mx * inv, pts[0].y - my * inv};
}

}  // namespace

VectorField reference_field(const VectorField& points) {
  const int k = points.channels(), h = points.height(), w = points.width();
  if (k < 3) throw std::invalid_argument("reference_field: need at least 3 points");
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const double* pv = points.tensor.data();

  Tensor out({1, 2, h, w});
  double* o = out.data();
  for (std::int64_t p = 0; p < hw; ++p) {
    std::vector<geo::Vec2<double>> pts(k);
    for (int ki = 0; ki < k; ++ki)
      pts[ki] = {pv[(static_cast<std::int64_t>(ki) * 2) * hw + p],
                 pv[(static_cast<std::int64_t>(ki) * 2 + 1) * hw + p]};
    geo::Vec2<double> ref;
    bool degenerate;
    reference_from_vectors(pts, ref, degenerate);
    o[p] = ref.x;
    o[hw + p] = ref.y;
  }
  ensure_finite(out, "reference_field");

  if (should_record({&points.tensor})) {
    Tensor in_copy = points.tensor, out_copy = out;
    Tape::active()->record({"reference_field", {points.tensor}, out, [in_copy, out_copy, k, hw]() mutable {
       if (!in_copy.requires_grad()) return;
       const double* go = out_copy.grad();
       const double* pv = in_copy.data();
       double* gi = in_copy.grad();
       const std::size_t slots = static_cast<std::size_t>(2 * k);
       for (std::int64_t p = 0; p < hw; ++p) {
         const double gx = go[p], gy = go[hw + p];
         if (gx == 0.0 && gy == 0.0) continue;
         std::vector<geo::Vec2<geo::Dual>> pts(k);
         for (int ki = 0; ki < k; ++ki) {
           pts[ki].x = geo::Dual::variable(pv[(static_cast<std::int64_t>(ki) * 2) * hw + p],
                                           2 * ki, slots);
           pts[ki].y = geo::Dual::variable(pv[(static_cast<std::int64_t>(ki) * 2 + 1) * hw + p],
                                           2 * ki + 1, slots);
         }
         geo::Vec2<geo::Dual> ref;
         bool degenerate;
         reference_from_vectors(pts, ref, degenerate);
         for (std::size_t s = 0; s < slots; ++s) {
           const double dx = s < ref.x.d.size() ? ref.x.d[s] : 0.0;
           const double dy = s < ref.y.d.size() ? ref.y.d[s] : 0.0;
           const int ki = static_cast<int>(s / 2);
           const int comp = static_cast<int>(s % 2);
           gi[(static_cast<std::int64_t>(ki) * 2 + comp) * hw + p] += gx * dx + gy * dy;
         }
       }
     }});
  }
  return VectorField(out);
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

DetectorOutputs detector_forward(DetectorModel& m, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("detector: image must be [3,H,W]");
  if (image.dim(1) < 9 || image.dim(2) < 9)
    throw std::invalid_argument("detector: image smaller than the receptive field");
  const DetectorConfig& cfg = m.cfg;
  const int n = cfg.group_order, k = cfg.num_points, c1 = cfg.trunk_channels;

  Tensor x = pad_to_odd(image);
  GroupFeature f = lift_conv(x, m.lift_w, 1, 1, n);
  f = GroupFeature(relu(add_channel_bias(f.tensor, m.lift_b)));
  f = GroupFeature(pad_to_odd(f.tensor));
  f = gconv_block(f, m.down1_w, m.down1_b, 2);
  f = GroupFeature(pad_to_odd(f.tensor));
  f = gconv_block(f, m.down2_w, m.down2_b, 2);

  const int gh = f.height(), gw = f.width();

  // Localization branch
  GroupFeature l = f;
  for (int i = 0; i < 3; ++i) l = gconv_block(l, m.loc_w[i], m.loc_b[i], 1);

  VectorField points;
  if (cfg.ablation.vector_field) {
    GroupFeature v0 = group_conv(l, m.vf0_w, 1, 1);
    VectorField vf0 = to_vector_field(GroupFeature(add_channel_bias(v0.tensor, m.vf0_b)));
    GroupFeature refined = re_dcn(l, vf0, m.redcn_w);
    refined = GroupFeature(relu(refined.tensor));
    GroupFeature v1 = group_conv(refined, m.vf1_w, 1, 1);
    VectorField vf1 = to_vector_field(GroupFeature(add_channel_bias(v1.tensor, m.vf1_b)));
    points = VectorField(add(vf0.tensor, vf1.tensor));
  } else {
    Tensor flat = reshape(l.tensor, {c1 * n, gh, gw});
    Tensor r0 = add_channel_bias(conv2d(flat, m.vf0_w, 1, 0), m.vf0_b);
    VectorField vf0(reshape(r0, {k, 2, gh, gw}));
    Tensor refined = relu(deform_sample_conv(flat, vf0, m.redcn_w, Tensor{}));
    Tensor r1 = add_channel_bias(conv2d(refined, m.vf1_w, 1, 0), m.vf1_b);
    points = VectorField(add(vf0.tensor, reshape(r1, {k, 2, gh, gw})));
  }

  // Classification branch
  GroupFeature c = f;
  for (int i = 0; i < 3; ++i) c = gconv_block(c, m.cls_w[i], m.cls_b[i], 1);

  DetectorOutputs out;
  Tensor invariant;
  switch (cfg.ablation.cls_mode) {
    case ClsMode::kOrientationAlign: {
      VectorField ref = reference_field(points);
      invariant = ri_dcn(c, points, ref, m.cls_dcn_w, m.cls_mod_w, &out.diag);
      break;
    }
    case ClsMode::kGroupPool: {
      Tensor pooled = group_pool(c);
      Tensor mod = sigmoid(conv2d(pooled, reshape(m.cls_mod_w, {k, c1, 1, 1}), 1, 0));
      invariant = deform_sample_conv(pooled, points, m.cls_dcn_w, mod);
      break;
    }
    case ClsMode::kFlatten: {
      Tensor flat = reshape(c.tensor, {c1 * n, gh, gw});
      Tensor mod = sigmoid(conv2d(flat, reshape(m.cls_mod_w, {k, c1 * n, 1, 1}), 1, 0));
      invariant = deform_sample_conv(flat, points, m.cls_dcn_w, mod);
      break;
    }
  }
  out.logits = add_channel_bias(conv2d(relu(invariant), m.logits_w, 1, 0), m.logits_b);
  out.points = points;
  out.grid_h = gh;
  out.grid_w = gw;
  return out;
}

// ---------------------------------------------------------------------------
// Baseline
// ---------------------------------------------------------------------------

BaselineModel make_baseline(const DetectorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.num_points != 9)
    throw std::invalid_argument("baseline: the fixed 3x3 deformable grid needs num_points == 9");
  BaselineModel m;
  m.cfg = cfg;
  Rng rng(seed);
  const int w0 = cfg.lift_channels * cfg.group_order;
  const int w1 = cfg.trunk_channels * cfg.group_order;
  const int ncls = cfg.num_classes;

  m.stem_w = he_init(rng, {w0, 3, 3, 3}, 3.0 * 9.0);
  m.stem_b = Tensor({w0});
  m.down1_w = he_init(rng, {w1, w0, 3, 3}, w0 * 9.0);
  m.down1_b = Tensor({w1});
  m.down2_w = he_init(rng, {w1, w1, 3, 3}, w1 * 9.0);
  m.down2_b = Tensor({w1});
  for (int i = 0; i < 3; ++i) {
    m.loc_w[i] = he_init(rng, {w1, w1, 3, 3}, w1 * 9.0);
    m.loc_b[i] = Tensor({w1});
    m.cls_w[i] = he_init(rng, {w1, w1, 3, 3}, w1 * 9.0);
    m.cls_b[i] = Tensor({w1});
  }
  m.off_w = small_init(rng, {18, w1, 3, 3}, 0.01);
  m.off_b = Tensor({18});
  m.loc_dcn_w = he_init(rng, {w1, w1, 9}, w1 * 9.0);
  m.vf1_w = small_init(rng, {18, w1, 1, 1}, 0.01);
  m.vf1_b = Tensor({18});
  m.cls_dcn_w = he_init(rng, {w1, w1, 9}, w1 * 9.0);
  m.cls_mod_w = Tensor({9, w1});
  m.logits_w = he_init(rng, {ncls, w1, 1, 1}, w1);
  m.logits_b = Tensor::full({ncls}, -2.0);
  return m;
}

std::vector<NamedParam> BaselineModel::parameters() {
  std::vector<NamedParam> ps;
  auto push = [&](const char* name, const char* layer, const char* role, Tensor& t) {
    if (t.defined()) ps.push_back({name, layer, role, 1, &t});
  };
  push("stem.weight", "conv2d", "weight", stem_w);
  push("stem.bias", "conv2d", "bias", stem_b);
  push("down1.weight", "conv2d", "weight", down1_w);
  push("down1.bias", "conv2d", "bias", down1_b);
  push("down2.weight", "conv2d", "weight", down2_w);
  push("down2.bias", "conv2d", "bias", down2_b);
  static const char* loc_names[3][2] = {{"loc.conv1.weight", "loc.conv1.bias"},
                                        {"loc.conv2.weight", "loc.conv2.bias"},
                                        {"loc.conv3.weight", "loc.conv3.bias"}};
  static const char* cls_names[3][2] = {{"cls.conv1.weight", "cls.conv1.bias"},
                                        {"cls.conv2.weight", "cls.conv2.bias"},
                                        {"cls.conv3.weight", "cls.conv3.bias"}};
  for (int i = 0; i < 3; ++i) {
    push(loc_names[i][0], "conv2d", "weight", loc_w[i]);
    push(loc_names[i][1], "conv2d", "bias", loc_b[i]);
  }
  push("loc.offsets.weight", "conv2d", "weight", off_w);
  push("loc.offsets.bias", "conv2d", "bias", off_b);
  push("loc.dcn.weight", "deform_conv", "weight", loc_dcn_w);
  push("loc.vf1.weight", "conv2d", "weight", vf1_w);
  push("loc.vf1.bias", "conv2d", "bias", vf1_b);
  push("cls.dcn.weight", "deform_conv", "weight", cls_dcn_w);
  push("cls.dcn.modulation", "deform_conv", "modulation", cls_mod_w);
  push("cls.logits.weight", "conv2d", "weight", logits_w);
  push("cls.logits.bias", "conv2d", "bias", logits_b);
  return ps;
}

std::int64_t BaselineModel::parameter_count() const {
  auto& self = const_cast<BaselineModel&>(*this);
  std::int64_t total = 0;
  for (auto& p : self.parameters()) total += p.value->numel();
  return total;
}

namespace {

// Fixed 3x3 sampling grid as a constant offset field, unit spacing.
// k = 3*gy + gx; displacement (gx-1, gy-1) in image terms.
Tensor base_grid_field(int h, int w) {
  Tensor t({9, 2, h, w});
  double* p = t.data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int gy = 0; gy < 3; ++gy) {
    for (int gx = 0; gx < 3; ++gx) {
      const int k = gy * 3 + gx;
      const double vx = gx - 1;
      const double vy = -(gy - 1);  // field vectors are y-up
      for (std::int64_t i = 0; i < hw; ++i) {
        p[(static_cast<std::int64_t>(k) * 2) * hw + i] = vx;
        p[(static_cast<std::int64_t>(k) * 2 + 1) * hw + i] = vy;
      }
    }
  }
  return t;
}

}  // namespace

DetectorOutputs baseline_forward(BaselineModel& m, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("baseline: image must be [3,H,W]");
  if (image.dim(1) < 9 || image.dim(2) < 9)
    throw std::invalid_argument("baseline: image smaller than the receptive field");
  const DetectorConfig& cfg = m.cfg;
  const int k = cfg.num_points;

  Tensor x = pad_to_odd(image);
  Tensor f = conv_block(x, m.stem_w, m.stem_b, 1);
  f = conv_block(pad_to_odd(f), m.down1_w, m.down1_b, 2);
  f = conv_block(pad_to_odd(f), m.down2_w, m.down2_b, 2);
  const int gh = f.dim(1), gw = f.dim(2);

  Tensor l = f;
  for (int i = 0; i < 3; ++i) l = conv_block(l, m.loc_w[i], m.loc_b[i], 1);
  Tensor res = add_channel_bias(conv2d(l, m.off_w, 1, 1), m.off_b);
  VectorField points0(add(reshape(res, {k, 2, gh, gw}), base_grid_field(gh, gw)));
  Tensor refined = relu(deform_sample_conv(l, points0, m.loc_dcn_w, Tensor{}));
  Tensor r1 = add_channel_bias(conv2d(refined, m.vf1_w, 1, 0), m.vf1_b);
  VectorField points(add(points0.tensor, reshape(r1, {k, 2, gh, gw})));

  Tensor c = f;
  for (int i = 0; i < 3; ++i) c = conv_block(c, m.cls_w[i], m.cls_b[i], 1);
  const int w1 = c.dim(0);
  Tensor mod = sigmoid(conv2d(c, reshape(m.cls_mod_w, {k, w1, 1, 1}), 1, 0));
  Tensor invariant = deform_sample_conv(c, points, m.cls_dcn_w, mod);

  DetectorOutputs out;
  out.logits = add_channel_bias(conv2d(relu(invariant), m.logits_w, 1, 0), m.logits_b);
  out.points = points;
  out.grid_h = gh;
  out.grid_w = gw;
  return out;
}

// ---------------------------------------------------------------------------
// Targets and losses
// ---------------------------------------------------------------------------

Assignment assign_targets(int grid_h, int grid_w, int stride,
                          const std::vector<SceneObject>& objects) {
  Assignment a;
  a.cls.assign(static_cast<std::size_t>(grid_h) * grid_w, -1);
  a.gt_index.assign(static_cast<std::size_t>(grid_h) * grid_w, -1);

  std::vector<geo::Polygon<double>> polys;
  std::vector<double> areas;
  for (const auto& o : objects) {
    polys.push_back(o.box.polygon());
    areas.push_back(geo::polygon_area(polys.back()));
  }
  for (int i = 0; i < grid_h; ++i) {
    for (int j = 0; j < grid_w; ++j) {
      const geo::Vec2<double> center{static_cast<double>(stride * j),
                                     static_cast<double>(stride * i)};
      int best = -1;
      for (std::size_t oi = 0; oi < objects.size(); ++oi) {
        if (!geo::point_in_convex(center, polys[oi])) continue;
        if (best < 0 || areas[oi] < areas[best]) best = static_cast<int>(oi);
      }
      if (best >= 0) {
        a.cls[static_cast<std::size_t>(i) * grid_w + j] = objects[best].class_id;
        a.gt_index[static_cast<std::size_t>(i) * grid_w + j] = best;
        ++a.positives;
      }
    }
  }
  return a;
}

Tensor focal_loss(const Tensor& logits, const std::vector<int>& cell_class, double gamma,
                  double alpha) {
  if (logits.rank() != 3) throw std::invalid_argument("focal_loss: logits must be [C,H,W]");
  const int c = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  if (static_cast<std::int64_t>(cell_class.size()) != hw)
    throw std::invalid_argument("focal_loss: target size mismatch");

  const double* z = logits.data();
  double total = 0.0;
  for (int ci = 0; ci < c; ++ci) {
    for (std::int64_t p = 0; p < hw; ++p) {
      const bool pos = cell_class[p] == ci;
      const double prob = 1.0 / (1.0 + std::exp(-z[ci * hw + p]));
      const double pt = std::clamp(pos ? prob : 1.0 - prob, 1e-12, 1.0 - 1e-12);
      const double at = pos ? alpha : 1.0 - alpha;
      total += -at * std::pow(1.0 - pt, gamma) * std::log(pt);
    }
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(hw));
  ensure_finite(out, "focal_loss");

  if (should_record({&logits})) {
    Tensor z_copy = logits, out_copy = out;
    std::vector<int> targets = cell_class;
    Tape::active()->record({"focal_loss", {logits}, out, [z_copy, out_copy, targets, c, hw, gamma, alpha]() mutable {
       if (!z_copy.requires_grad()) return;
       const double g = out_copy.grad()[0] / static_cast<double>(hw);
       const double* z = z_copy.data();
       double* gz = z_copy.grad();
       for (int ci = 0; ci < c; ++ci) {
         for (std::int64_t p = 0; p < hw; ++p) {
           const bool pos = targets[p] == ci;
           const double prob = 1.0 / (1.0 + std::exp(-z[ci * hw + p]));
           const double pt = std::clamp(pos ? prob : 1.0 - prob, 1e-12, 1.0 - 1e-12);
           const double at = pos ? alpha : 1.0 - alpha;
           const double q = 1.0 - pt;
           // dL/dpt, then dpt/dz = +-prob(1-prob)
           const double dl_dpt = at * gamma * std::pow(q, gamma - 1.0) * std::log(pt) -
                                 at * std::pow(q, gamma) / pt;
           const double dpt_dz = (pos ? 1.0 : -1.0) * prob * (1.0 - prob);
           gz[ci * hw + p] += g * dl_dpt * dpt_dz;
         }
       }
     }});
  }
  return out;
}

namespace {

struct PositiveGrad {
  std::int64_t cell;
  std::vector<double> d;  // 2K slots: d(loss)/d(vx_k), d(loss)/d(vy_k)
};

// Image-space dual points for one cell; slots 2k / 2k+1 are vx_k / vy_k.
std::vector<geo::Vec2<geo::Dual>> dual_points(const double* pv, std::int64_t hw, std::int64_t p,
                                              int k, int cell_y, int cell_x, int stride) {
  std::vector<geo::Vec2<geo::Dual>> pts(k);
  const std::size_t slots = static_cast<std::size_t>(2 * k);
  for (int ki = 0; ki < k; ++ki) {
    const geo::Dual vx =
        geo::Dual::variable(pv[(static_cast<std::int64_t>(ki) * 2) * hw + p], 2 * ki, slots);
    const geo::Dual vy =
        geo::Dual::variable(pv[(static_cast<std::int64_t>(ki) * 2 + 1) * hw + p], 2 * ki + 1, slots);
    const double s = stride;
    pts[ki].x = geo::Dual(s * cell_x) + geo::Dual(s) * vx;
    pts[ki].y = geo::Dual(s * cell_y) - geo::Dual(s) * vy;
  }
  return pts;
}

geo::Dual positive_loss(const std::vector<geo::Vec2<geo::Dual>>& pts, const geo::OrientedBox& gt,
                        double lambda_ec, bool use_ec, bool& degenerate, double& giou_value,
                        double& ec_value) {
  geo::OrientedBoxT<geo::Dual> gt_dual;
  for (int i = 0; i < 4; ++i) gt_dual.corners[i] = {geo::Dual(gt.corners[i].x), geo::Dual(gt.corners[i].y)};
  const geo::Polygon<geo::Dual> gt_poly = gt_dual.polygon();

  geo::Dual loss(0.0);
  degenerate = false;
  try {
    const auto hull = geo::convex_hull(pts);
    const geo::Dual g = geo::giou(hull, gt_poly);
    loss = geo::Dual(1.0) - g;
    giou_value = geo::value_of(g);
  } catch (const std::domain_error&) {
    // Degenerate point cloud: pull points apart toward the gt corners.
    degenerate = true;
    const geo::Vec2<geo::Dual> diag = gt_dual.corners[2] - gt_dual.corners[0];
    const geo::Dual diag_len = geo::norm(diag);
    geo::Dual spread(0.0);
    for (std::size_t ki = 0; ki < pts.size(); ++ki)
      spread += geo::norm(pts[ki] - gt_dual.corners[ki % 4]);
    loss = geo::Dual(1.0) + spread / (geo::Dual(static_cast<double>(pts.size())) * diag_len);
    giou_value = -1.0;
  }
  if (use_ec) {
    const geo::Dual ec = geo::edge_constraint(pts[0], gt_dual);
    ec_value = geo::value_of(ec);
    loss += geo::Dual(lambda_ec) * ec;
  } else {
    ec_value = 0.0;
  }
  return loss;
}

}  // namespace

Tensor localization_loss(const VectorField& points, const Assignment& assignment,
                         const std::vector<SceneObject>& objects, int stride, double lambda_ec,
                         bool use_edge_constraint, LocLossStats* stats) {
  const int k = points.channels(), h = points.height(), w = points.width();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  if (static_cast<std::int64_t>(assignment.cls.size()) != hw)
    throw std::invalid_argument("localization_loss: assignment size mismatch");
  const double* pv = points.tensor.data();

  double total = 0.0;
  LocLossStats local;
  std::vector<PositiveGrad> grads;
  for (std::int64_t p = 0; p < hw; ++p) {
    const int gt_idx = assignment.gt_index[p];
    if (gt_idx < 0) continue;
    const int cy = static_cast<int>(p / w), cx = static_cast<int>(p % w);
    const auto pts = dual_points(pv, hw, p, k, cy, cx, stride);
    bool degenerate;
    double giou_value, ec_value;
    const geo::Dual loss = positive_loss(pts, objects[gt_idx].box, lambda_ec, use_edge_constraint,
                                         degenerate, giou_value, ec_value);
    total += loss.v;
    local.giou_term += 1.0 - giou_value;
    local.ec_term += ec_value;
    local.positives += 1;
    local.degenerate_hulls += degenerate ? 1 : 0;
    PositiveGrad pg;
    pg.cell = p;
    pg.d.assign(static_cast<std::size_t>(2 * k), 0.0);
    for (std::size_t s = 0; s < pg.d.size() && s < loss.d.size(); ++s) pg.d[s] = loss.d[s];
    grads.push_back(std::move(pg));
  }
  const int npos = std::max(1, local.positives);
  if (stats) *stats = local;

  Tensor out = Tensor::scalar(total / npos);
  ensure_finite(out, "localization_loss");
  if (should_record({&points.tensor}) && !grads.empty()) {
    Tensor p_copy = points.tensor, out_copy = out;
    Tape::active()->record({"localization_loss", {points.tensor}, out, [p_copy, out_copy, grads, k, hw, npos]() mutable {
       if (!p_copy.requires_grad()) return;
       const double g = out_copy.grad()[0] / npos;
       double* gp = p_copy.grad();
       for (const auto& pg : grads) {
         for (int ki = 0; ki < k; ++ki) {
           gp[(static_cast<std::int64_t>(ki) * 2) * hw + pg.cell] += g * pg.d[2 * ki];
           gp[(static_cast<std::int64_t>(ki) * 2 + 1) * hw + pg.cell] += g * pg.d[2 * ki + 1];
         }
       }
     }});
  }
  return out;
}

LossBreakdown total_loss(const DetectorOutputs& out, const std::vector<SceneObject>& objects,
                         const DetectorConfig& cfg, LocLossStats* loc_stats) {
  const Assignment assignment = assign_targets(out.grid_h, out.grid_w, cfg.stride(), objects);
  Tensor focal = focal_loss(out.logits, assignment.cls, cfg.focal_gamma, cfg.focal_alpha);
  LocLossStats stats;
  Tensor loc = localization_loss(out.points, assignment, objects, cfg.stride(), cfg.lambda_ec,
                                 cfg.ablation.edge_constraint, &stats);
  if (loc_stats) *loc_stats = stats;

  LossBreakdown lb;
  lb.total = add(focal, loc);
  lb.focal = focal.item();
  lb.loc = loc.item();
  lb.positives = assignment.positives;
  return lb;
}

// ---------------------------------------------------------------------------
// Decode
// ---------------------------------------------------------------------------

std::vector<geo::Vec2<double>> decode_cell_points(const VectorField& points, int cell_y,
                                                  int cell_x, int stride) {
  const int k = points.channels(), w = points.width();
  const std::int64_t hw = static_cast<std::int64_t>(points.height()) * w;
  const std::int64_t p = static_cast<std::int64_t>(cell_y) * w + cell_x;
  const double* pv = points.tensor.data();
  std::vector<geo::Vec2<double>> pts(k);
  for (int ki = 0; ki < k; ++ki) {
    const double vx = pv[(static_cast<std::int64_t>(ki) * 2) * hw + p];
    const double vy = pv[(static_cast<std::int64_t>(ki) * 2 + 1) * hw + p];
    pts[ki] = {stride * (cell_x + vx), stride * (cell_y - vy)};
  }
  return pts;
}

std::vector<Detection> decode_detections(const DetectorOutputs& out, const DetectorConfig& cfg) {
  const int ncls = out.logits.dim(0), h = out.grid_h, w = out.grid_w;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const double* z = out.logits.data();

  std::vector<Detection> candidates;
  for (std::int64_t p = 0; p < hw; ++p) {
    int best_c = 0;
    double best_z = z[p];
    for (int ci = 1; ci < ncls; ++ci) {
      if (z[ci * hw + p] > best_z) {
        best_z = z[ci * hw + p];
        best_c = ci;
      }
    }
    const double score = 1.0 / (1.0 + std::exp(-best_z));
    if (score < cfg.score_threshold) continue;
    const int cy = static_cast<int>(p / w), cx = static_cast<int>(p % w);
    auto pts = decode_cell_points(out.points, cy, cx, cfg.stride());
    try {
      const auto hull = geo::convex_hull(pts);
      Detection d;
      d.box = geo::min_area_rect(hull);
      d.class_id = best_c;
      d.score = score;
      d.point_set = std::move(pts);
      candidates.push_back(std::move(d));
    } catch (const std::domain_error&) {
      continue;  // degenerate point set, nothing to decode
    }
  }

  // class-wise NMS
  std::vector<Detection> kept;
  for (int ci = 0; ci < ncls; ++ci) {
    std::vector<geo::OrientedBox> boxes;
    std::vector<double> scores;
    std::vector<int> idx;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (candidates[i].class_id != ci) continue;
      boxes.push_back(candidates[i].box);
      scores.push_back(candidates[i].score);
      idx.push_back(static_cast<int>(i));
    }
    for (int keep : geo::rotated_nms(boxes, scores, cfg.nms_iou))
      kept.push_back(candidates[idx[keep]]);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return kept;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

void save_model_params(const std::string& stem, std::vector<NamedParam> params,
                       const DetectorConfig& cfg, const char* kind) {
  std::vector<ParamRecord> records;
  std::vector<Tensor> tensors;
  for (auto& p : params) {
    records.push_back({p.name, p.layer, p.role, p.group_order});
    tensors.push_back(*p.value);
  }
  nlohmann::json config = nlohmann::json::parse(config_to_json(cfg));
  config["model_kind"] = kind;
  save_checkpoint(stem, records, tensors, config.dump());
}

void load_model_params(const Checkpoint& ck, std::vector<NamedParam> params) {
  if (ck.tensors.size() != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (ck.records[i].name != params[i].name)
      throw std::runtime_error("checkpoint: parameter name mismatch at " + ck.records[i].name);
    if (ck.tensors[i].shape() != params[i].value->shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + ck.records[i].name);
    *params[i].value = ck.tensors[i].clone();
  }
}

}  // namespace

void save_detector(const std::string& stem, DetectorModel& model) {
  save_model_params(stem, model.parameters(), model.cfg, "equivariant");
}

DetectorModel load_detector(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  nlohmann::json config = nlohmann::json::parse(ck.config_json);
  if (config.value("model_kind", "") != "equivariant")
    throw std::runtime_error("checkpoint does not hold an equivariant detector");
  DetectorModel m = make_detector(config_from_json(ck.config_json), 0);
  load_model_params(ck, m.parameters());
  return m;
}

void save_baseline(const std::string& stem, BaselineModel& model) {
  save_model_params(stem, model.parameters(), model.cfg, "baseline");
}

BaselineModel load_baseline(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  nlohmann::json config = nlohmann::json::parse(ck.config_json);
  if (config.value("model_kind", "") != "baseline")
    throw std::runtime_error("checkpoint does not hold a baseline model");
  BaselineModel m = make_baseline(config_from_json(ck.config_json), 0);
  load_model_params(ck, m.parameters());
  return m;
}

bool checkpoint_is_baseline(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  nlohmann::json config = nlohmann::json::parse(ck.config_json);
  return config.value("model_kind", "") == "baseline";
}

}  // namespace equikit
