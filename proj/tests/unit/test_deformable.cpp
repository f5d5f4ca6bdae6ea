// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "equikit/deformable.hpp"
#include "support/test_utils.hpp"

using namespace equikit;
using namespace equikit::testing;

namespace {

VectorField constant_field(int k, int h, int w, double vx, double vy) {
  Tensor t({k, 2, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int ki = 0; ki < k; ++ki)
    for (std::int64_t i = 0; i < hw; ++i) {
      t.data()[(static_cast<std::int64_t>(ki) * 2) * hw + i] = vx;
      t.data()[(static_cast<std::int64_t>(ki) * 2 + 1) * hw + i] = vy;
    }
  return VectorField(t);
}

VectorField smooth_offsets(Rng& rng, int k, int h, int w, double scale) {
  // low-frequency field: constant + small linear ramp
  Tensor t({k, 2, h, w});
  for (int ki = 0; ki < k; ++ki) {
    const double ax = rng.uniform(-scale, scale), ay = rng.uniform(-scale, scale);
    const double bx = rng.uniform(-0.05, 0.05), by = rng.uniform(-0.05, 0.05);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        t.at({ki, 0, y, x}) = ax + bx * (x - (w - 1) * 0.5) * 0.1;
        t.at({ki, 1, y, x}) = ay + by * (y - (h - 1) * 0.5) * 0.1;
      }
  }
  return VectorField(t);
}

}  // namespace

TEST_CASE("re_dcn degenerate identity: one tap, zero offsets, identity weight") {
  Rng rng(179);
  GroupFeature f(random_tensor(rng, {2, 4, 5, 5}));
  VectorField zero = constant_field(1, 5, 5, 0.0, 0.0);
  Tensor w = Tensor::zeros({2, 2, 1});
  w.at({0, 0, 0}) = 1.0;
  w.at({1, 1, 0}) = 1.0;
  GroupFeature out = re_dcn(f, zero, w);
  CHECK(max_abs_diff(out.tensor, f.tensor) < 1e-15);
}

TEST_CASE("re_dcn bilinear midpoint example") {
  // single-group feature [[0,2],[0,0]], offset (0.5,0): value 1.0 at the origin
  Tensor t = Tensor::from({1, 1, 2, 2}, {0, 2, 0, 0});
  GroupFeature f(t);
  VectorField half = constant_field(1, 2, 2, 0.5, 0.0);
  Tensor w = Tensor::ones({1, 1, 1});
  GroupFeature out = re_dcn(f, half, w);
  CHECK(out.tensor.at({0, 0, 0, 0}) == doctest::Approx(1.0));
}

TEST_CASE("re_dcn weight shape is independent of the group order") {
  Tensor w({4, 3, 9});
  CHECK(w.numel() == 4 * 3 * 9);  // no N axis anywhere in the parameters
}

TEST_CASE("re_dcn equivariance under C4") {
  Rng rng(181);
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    GroupFeature f(random_tensor(rng, {2, 4, 7, 7}));
    VectorField offs = smooth_offsets(rng, 3, 7, 7, 1.2);
    Tensor w = random_tensor(rng, {2, 2, 3});
    for (int g = 1; g < 4; ++g) {
      Tensor lhs = re_dcn(act_group_feature(g, f), apply_rg_tg(g, offs, 4), w).tensor;
      Tensor rhs = act_group_feature(g, re_dcn(f, offs, w)).tensor;
      worst = std::max(worst, max_abs_diff(lhs, rhs));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("re_dcn rejects offset/weight tap mismatch") {
  Rng rng(191);
  GroupFeature f(random_tensor(rng, {2, 4, 5, 5}));
  VectorField offs = constant_field(3, 5, 5, 0.0, 0.0);
  Tensor w = random_tensor(rng, {2, 2, 4});
  CHECK_THROWS_AS(re_dcn(f, offs, w), std::invalid_argument);
}

TEST_CASE("ri_dcn with zero angle and zero offsets is a 1x1 conv on the flattened feature") {
  Rng rng(193);
  const int c = 2, n = 4, h = 5, w = 5;
  GroupFeature f(random_tensor(rng, {c, n, h, w}));
  VectorField zero = constant_field(1, h, w, 0.0, 0.0);
  VectorField ref = constant_field(1, h, w, 1.0, 0.0);  // theta = 0 everywhere
  Tensor wt = random_tensor(rng, {3, c * n, 1});

  Tensor out = ri_dcn(f, zero, ref, wt, Tensor{});
  Tensor flat = reshape(f.tensor, {c * n, h, w});
  Tensor expected = conv2d(flat, reshape(wt, {3, c * n, 1, 1}), 1, 0);
  CHECK(max_abs_diff(out, expected) < 1e-12);
}

TEST_CASE("zero modulation logits halve the output versus modulation off") {
  Rng rng(197);
  const int c = 2, n = 4, h = 5, w = 5, k = 3;
  GroupFeature f(random_tensor(rng, {c, n, h, w}));
  VectorField offs = smooth_offsets(rng, k, h, w, 0.8);
  VectorField ref = constant_field(1, h, w, 1.0, 0.3);
  Tensor wt = random_tensor(rng, {2, c * n, k});
  Tensor zero_mod = Tensor::zeros({k, c * n});

  Tensor with_mod = ri_dcn(f, offs, ref, wt, zero_mod);
  Tensor without = ri_dcn(f, offs, ref, wt, Tensor{});
  Tensor halved = scale(without, 0.5);
  CHECK(max_abs_diff(with_mod, halved) < 1e-12);
}

TEST_CASE("ri_dcn instance-level invariance under C4") {
  Rng rng(199);
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    const int c = 2, n = 4, k = 3;
    GroupFeature f(random_tensor(rng, {c, n, 7, 7}));
    VectorField offs = smooth_offsets(rng, k, 7, 7, 1.0);
    VectorField ref = constant_field(1, 7, 7, 1.0, 0.4);
    Tensor wt = random_tensor(rng, {3, c * n, k});
    Tensor mw = random_tensor(rng, {k, c * n}, 0.4);
    for (int g = 1; g < 4; ++g) {
      Tensor lhs = ri_dcn(act_group_feature(g, f), apply_rg_tg(g, offs, 4),
                          apply_rg_tg(g, ref, 4), wt, mw);
      Tensor rhs = rotate_image(ri_dcn(f, offs, ref, wt, mw), g, 4);
      worst = std::max(worst, max_abs_diff(lhs, rhs));
    }
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("ri_dcn counts degenerate reference pixels instead of failing") {
  Rng rng(211);
  const int c = 1, n = 4, h = 3, w = 3;
  GroupFeature f(random_tensor(rng, {c, n, h, w}));
  VectorField zero_ref = constant_field(1, h, w, 0.0, 0.0);
  VectorField offs = constant_field(2, h, w, 0.0, 0.0);
  Tensor wt = random_tensor(rng, {1, c * n, 2});
  RiDcnDiagnostics diag;
  Tensor out = ri_dcn(f, offs, zero_ref, wt, Tensor{}, &diag);
  CHECK(diag.degenerate_ref_pixels == h * w);
  CHECK(out.all_finite());
}
