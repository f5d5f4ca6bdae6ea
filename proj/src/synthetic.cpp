// SPDX-License-Identifier: Apache-2.0

#include "equikit/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "equikit/rng.hpp"
#include "equikit/serialize.hpp"

namespace equikit {

namespace {

// Shape kinds, cycled by class id.
enum ShapeKind { kRectangle = 0, kEllipse = 1, kTriangle = 2 };

int shape_of_class(int class_id) { return class_id % 3; }

// Class palettes; jittered per object so color alone is not a perfect cue.
const double kPalette[4][3] = {
    {0.85, 0.30, 0.25},
    {0.25, 0.65, 0.85},
    {0.35, 0.80, 0.35},
    {0.85, 0.75, 0.30},
};

struct Shape {
  int class_id;
  double cx, cy, w, h, angle;  // generating box: long side w at `angle`
  geo::OrientedBox box() const { return geo::box_from_center(cx, cy, w, h, angle); }

  // Local frame matching box_from_center: u along width, v along height.
  bool inside(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = x - cx, dy = y - cy;
    const double u = dx * c - dy * s;
    const double v = dx * s + dy * c;
    const double hw = w * 0.5, hh = h * 0.5;
    switch (shape_of_class(class_id)) {
      case kRectangle:
        return std::abs(u) <= hw && std::abs(v) <= hh;
      case kEllipse:
        return (u / hw) * (u / hw) + (v / hh) * (v / hh) <= 1.0;
      default: {  // isoceles triangle: apex at +u, base at -u
        if (u < -hw || u > hw) return false;
        return std::abs(v) <= hh * (hw - u) / w;
      }
    }
  }
};

}  // namespace

void SceneConfig::validate() const {
  if (height < 8 || width < 8) throw std::invalid_argument("scene: canvas too small");
  if (num_classes < 2 || num_classes > 4)
    throw std::invalid_argument("scene: num_classes must be in [2,4]");
  if (min_objects < 0 || max_objects < min_objects)
    throw std::invalid_argument("scene: bad object count range");
  if (min_size <= 2.0 || max_size < min_size) throw std::invalid_argument("scene: bad size range");
}

double shape_fill_factor(int class_id) {
  switch (shape_of_class(class_id)) {
    case kRectangle: return 1.0;
    case kEllipse: return 0.25 * 3.14159265358979323846;
    default: return 0.5;
  }
}

SyntheticScene gen_scene(std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  const int h = cfg.height, w = cfg.width;

  // Sample objects with rejection on overlap (circumradius test).
  std::vector<Shape> shapes;
  const int want = cfg.min_objects + (cfg.max_objects > cfg.min_objects
                                          ? rng.uniform_int(cfg.max_objects - cfg.min_objects + 1)
                                          : 0);
  const double ccx = (w - 1) * 0.5, ccy = (h - 1) * 0.5;
  // Largest disk about the canvas center that stays on-canvas under any
  // rotation; rotation-safe objects live inside it, minus the margin.
  const double safe_radius = 0.5 * (std::min(h, w) - 1) - cfg.margin;
  for (int i = 0; i < want; ++i) {
    for (int attempt = 0; attempt < 60; ++attempt) {
      Shape s;
      s.class_id = rng.uniform_int(cfg.num_classes);
      s.w = rng.uniform(cfg.min_size, cfg.max_size);
      s.h = s.w / rng.uniform(cfg.min_aspect, cfg.max_aspect);
      s.angle = rng.uniform(cfg.angle_min, cfg.angle_max);
      const double circum = 0.5 * std::hypot(s.w, s.h);
      if (cfg.rotation_safe) {
        const double r_max = safe_radius - circum;
        if (r_max <= 0.0) continue;
        const double rr = std::sqrt(rng.uniform()) * r_max;
        const double phi = rng.uniform(0.0, 6.28318530717958647692);
        s.cx = ccx + rr * std::cos(phi);
        s.cy = ccy + rr * std::sin(phi);
      } else {
        const double mx = cfg.margin + circum;
        if (w - 1 - 2 * mx <= 0 || h - 1 - 2 * mx <= 0) continue;
        s.cx = rng.uniform(mx, w - 1 - mx);
        s.cy = rng.uniform(mx, h - 1 - mx);
      }
      bool clash = false;
      for (const auto& o : shapes) {
        const double d = std::hypot(s.cx - o.cx, s.cy - o.cy);
        if (d < circum + 0.5 * std::hypot(o.w, o.h) + 2.0) {
          clash = true;
          break;
        }
      }
      if (!clash) {
        shapes.push_back(s);
        break;
      }
    }
  }

  // Per-object color after geometry so the draw list alone fixes the stream.
  std::vector<std::array<double, 3>> colors;
  for (const auto& s : shapes) {
    std::array<double, 3> c;
    for (int ch = 0; ch < 3; ++ch)
      c[ch] = std::clamp(kPalette[s.class_id % 4][ch] + rng.uniform(-0.08, 0.08), 0.0, 1.0);
    colors.push_back(c);
  }

  SyntheticScene scene;
  scene.seed = seed;
  scene.image = Tensor({3, h, w});
  double* img = scene.image.data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;

  // Background: flat gray plus uniform noise.
  for (int py = 0; py < h; ++py)
    for (int px = 0; px < w; ++px) {
      const double g = 0.12 + rng.uniform(-0.03, 0.03);
      for (int ch = 0; ch < 3; ++ch) img[ch * hw + py * w + px] = g;
    }

  // Paint shapes in order with supersampled coverage.
  for (std::size_t si = 0; si < shapes.size(); ++si) {
    const Shape& s = shapes[si];
    const double circum = 0.5 * std::hypot(s.w, s.h) + 1.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - circum)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(s.cx + circum)));
    const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - circum)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(s.cy + circum)));
    for (int py = y0; py <= y1; ++py) {
      for (int px = x0; px <= x1; ++px) {
        int hits = 0;
        for (int sy = 0; sy < 4; ++sy)
          for (int sx = 0; sx < 4; ++sx)
            if (s.inside(px + (sx + 0.5) / 4.0 - 0.5, py + (sy + 0.5) / 4.0 - 0.5)) ++hits;
        if (hits == 0) continue;
        const double cov = hits / 16.0;
        for (int ch = 0; ch < 3; ++ch) {
          double& v = img[ch * hw + py * w + px];
          v = (1.0 - cov) * v + cov * colors[si][ch];
        }
      }
    }
    scene.objects.push_back({s.box(), s.class_id});
  }
  return scene;
}

std::vector<SyntheticScene> gen_scenes(std::uint64_t base_seed, int count, const SceneConfig& cfg) {
  std::vector<SyntheticScene> scenes;
  scenes.reserve(count);
  for (int i = 0; i < count; ++i) scenes.push_back(gen_scene(base_seed + i, cfg));
  return scenes;
}

namespace {
std::string scene_stem(const std::string& dir, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%05d", index);
  return dir + "/" + buf;
}
}  // namespace

void save_dataset(const std::string& dir, const std::vector<SyntheticScene>& scenes) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const std::string stem = scene_stem(dir, static_cast<int>(i));
    save_tensors(stem + ".eqtn", {scenes[i].image});
    std::vector<geo::LabeledBox> boxes;
    for (const auto& o : scenes[i].objects) boxes.push_back({o.box, o.class_id, -1.0});
    geo::write_obb_file(stem + ".txt", boxes);
  }
  nlohmann::json manifest;
  manifest["count"] = scenes.size();
  if (!scenes.empty()) {
    manifest["height"] = scenes[0].image.dim(1);
    manifest["width"] = scenes[0].image.dim(2);
  }
  std::ofstream out(dir + "/manifest.json");
  out << manifest.dump(2) << "\n";
}

std::vector<SyntheticScene> load_dataset(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("dataset: missing manifest in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(mf);
  const int count = manifest.at("count").get<int>();
  std::vector<SyntheticScene> scenes;
  scenes.reserve(count);
  for (int i = 0; i < count; ++i) {
    const std::string stem = scene_stem(dir, i);
    SyntheticScene s;
    auto tensors = load_tensors(stem + ".eqtn");
    if (tensors.size() != 1) throw std::runtime_error("dataset: bad scene tensor file");
    s.image = std::move(tensors[0]);
    for (const auto& lb : geo::read_obb_file(stem + ".txt")) s.objects.push_back({lb.box, lb.class_id});
    scenes.push_back(std::move(s));
  }
  return scenes;
}

}  // namespace equikit
