// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "equikit/group.hpp"
#include "equikit/vector_field.hpp"
#include "support/test_utils.hpp"

using namespace equikit;
using namespace equikit::testing;

namespace {
constexpr double kPi = 3.14159265358979323846;

GroupFeature random_feature(Rng& rng, int c, int n, int h, int w) {
  return GroupFeature(random_tensor(rng, {c, n, h, w}));
}
}  // namespace

TEST_CASE("cyclic group law and inverses") {
  CyclicGroup g4(4);
  for (int a = 0; a < 4; ++a) {
    CHECK(g4.compose(a, g4.inverse(a)) == 0);
    for (int b = 0; b < 4; ++b) CHECK(g4.compose(a, b) == (a + b) % 4);
  }
  CHECK(g4.is_quarter_turn(1));
  CyclicGroup g8(8);
  CHECK(g8.is_quarter_turn(2));
  CHECK_FALSE(g8.is_quarter_turn(1));
}

TEST_CASE("act_group_feature shifts fibers and rotates planes") {
  // center fiber [A,B,C,D] with g=1 -> [D,A,B,C], planes rotated 90 degrees
  const int n = 4;
  Tensor t({1, n, 3, 3});
  const double fiber[4] = {1.0, 2.0, 3.0, 4.0};  // A,B,C,D
  for (int i = 0; i < n; ++i) t.at({0, i, 1, 1}) = fiber[i];
  GroupFeature f(t);

  GroupFeature id = act_group_feature(0, f);
  CHECK(max_abs_diff(id.tensor, f.tensor) == 0.0);

  GroupFeature a = act_group_feature(1, f);
  CHECK(a.tensor.at({0, 0, 1, 1}) == 4.0);
  CHECK(a.tensor.at({0, 1, 1, 1}) == 1.0);
  CHECK(a.tensor.at({0, 2, 1, 1}) == 2.0);
  CHECK(a.tensor.at({0, 3, 1, 1}) == 3.0);

  // off-center value travels with the spatial rotation
  Tensor t2 = Tensor::zeros({1, n, 3, 3});
  t2.at({0, 2, 0, 1}) = 7.0;  // top-center of orientation plane 2
  GroupFeature f2(t2);
  GroupFeature a2 = act_group_feature(1, f2);
  CHECK(a2.tensor.at({0, 3, 1, 0}) == 7.0);  // left-center of plane 3
}

TEST_CASE("act composes by the group law exactly") {
  Rng rng(101);
  GroupFeature f = random_feature(rng, 2, 4, 5, 5);
  for (int g1 = 0; g1 < 4; ++g1)
    for (int g2 = 0; g2 < 4; ++g2) {
      GroupFeature lhs = act_group_feature(g1, act_group_feature(g2, f));
      GroupFeature rhs = act_group_feature((g1 + g2) % 4, f);
      CHECK(max_abs_diff(lhs.tensor, rhs.tensor) == 0.0);
    }
}

TEST_CASE("rotate_kernel quarter turns and identity") {
  Rng rng(103);
  Tensor w = random_tensor(rng, {1, 1, 3, 3});
  CHECK(max_abs_diff(rotate_kernel(w, 0, 4), w) == 0.0);

  Tensor delta = Tensor::zeros({1, 1, 3, 3});
  delta.at({0, 0, 0, 1}) = 1.0;  // top-center
  Tensor r = rotate_kernel(delta, 1, 4);
  CHECK(r.at({0, 0, 1, 0}) == 1.0);  // left-center after CCW quarter turn

  // full turn normalizes to the identity
  CHECK(max_abs_diff(rotate_kernel(w, 4, 4), w) == 0.0);
}

TEST_CASE("rotate_kernel round trips") {
  Rng rng(107);
  Tensor w = random_tensor(rng, {1, 1, 3, 3});

  // N=4: four quarter turns recover the kernel exactly
  Tensor r4 = w.clone();
  for (int i = 0; i < 4; ++i) r4 = rotate_kernel(r4, 1, 4);
  CHECK(max_abs_diff(r4, w) < 1e-10);

  // N=8 quarter-step composition: one extra 90-degree step equals an exact
  // quarter rotation of the same bank element, bit for bit.
  Tensor bank = mask_kernel_disk(w);
  for (int g = 0; g < 6; ++g) {
    Tensor lhs = rotate_kernel(bank, g + 2, 8);
    Tensor rhs = rotate_image(rotate_kernel(bank, g, 8), 1, 4);
    CHECK(max_abs_diff(lhs, rhs) == 0.0);
  }

  // Iterated 45-degree bilinear resampling is lossy; rotated copies must
  // always be produced from the base bank in one call.
  Tensor r8 = bank.clone();
  for (int i = 0; i < 8; ++i) r8 = rotate_kernel(r8, 1, 8);
  CHECK(max_abs_diff(r8, bank) > 0.1);
}

TEST_CASE("lift_conv with a delta kernel copies the input into every orientation") {
  Rng rng(109);
  Tensor x = random_tensor(rng, {2, 5, 5});
  Tensor w = Tensor::zeros({2, 2, 3, 3});
  w.at({0, 0, 1, 1}) = 1.0;
  w.at({1, 1, 1, 1}) = 1.0;
  GroupFeature f = lift_conv(x, w, 1, 1, 4);
  for (int n = 0; n < 4; ++n) {
    Tensor plane = select(f.tensor, 1, n);
    CHECK(max_abs_diff(plane, x) < 1e-15);
  }
}

TEST_CASE("lift_conv equivariance") {
  Rng rng(113);
  SUBCASE("exact for C4") {
    double worst = 0.0;
    for (int t = 0; t < 5; ++t) {
      Tensor x = random_tensor(rng, {1, 7, 7});
      Tensor w = random_tensor(rng, {2, 1, 3, 3});
      for (int g = 1; g < 4; ++g) {
        Tensor lhs = lift_conv(rotate_image(x, g, 4), w, 1, 1, 4).tensor;
        Tensor rhs = act_group_feature(g, lift_conv(x, w, 1, 1, 4)).tensor;
        worst = std::max(worst, max_abs_diff(lhs, rhs));
      }
    }
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("group_conv with N=1 degenerates to conv2d") {
  Rng rng(127);
  Tensor x = random_tensor(rng, {2, 5, 5});
  Tensor w = random_tensor(rng, {3, 2, 1, 3, 3});
  GroupFeature f(stack({x}, 1));  // [2,1,5,5]
  Tensor wg = Tensor::from({3, 2, 3, 3}, std::vector<double>(w.data(), w.data() + w.numel()));
  Tensor expected = conv2d(x, wg, 1, 1);
  Tensor got = select(group_conv(f, w, 1, 1).tensor, 1, 0);
  CHECK(max_abs_diff(got, expected) < 1e-15);
}

TEST_CASE("group_conv equivariance, single and stacked") {
  Rng rng(131);
  double worst_single = 0.0, worst_stack = 0.0;
  for (int t = 0; t < 4; ++t) {
    Tensor x = random_tensor(rng, {1, 7, 7});
    Tensor w_lift = random_tensor(rng, {2, 1, 3, 3});
    Tensor w1 = random_tensor(rng, {2, 2, 4, 3, 3});
    Tensor w2 = random_tensor(rng, {2, 2, 4, 3, 3});
    GroupFeature f = lift_conv(x, w_lift, 1, 1, 4);
    for (int g = 1; g < 4; ++g) {
      Tensor lhs = group_conv(act_group_feature(g, f), w1, 1, 1).tensor;
      Tensor rhs = act_group_feature(g, group_conv(f, w1, 1, 1)).tensor;
      worst_single = std::max(worst_single, max_abs_diff(lhs, rhs));

      GroupFeature stacked = group_conv(group_conv(lift_conv(x, w_lift, 1, 1, 4), w1, 1, 1), w2, 1, 1);
      GroupFeature stacked_rot =
          group_conv(group_conv(lift_conv(rotate_image(x, g, 4), w_lift, 1, 1, 4), w1, 1, 1), w2, 1, 1);
      worst_stack = std::max(
          worst_stack, max_abs_diff(stacked_rot.tensor, act_group_feature(g, stacked).tensor));
    }
  }
  CHECK(worst_single < 1e-10);
  CHECK(worst_stack < 1e-9);
}

TEST_CASE("group_conv weight sharing is 1/N of an orientation-unshared conv") {
  const int c_out = 4, c_in = 3, n = 8, k = 3;
  Tensor shared({c_out, c_in, n, k, k});
  const std::int64_t unshared = static_cast<std::int64_t>(c_out * n) * (c_in * n) * k * k;
  CHECK(shared.numel() * n == unshared);
}

TEST_CASE("group_pool examples and invariance") {
  Tensor t = Tensor::zeros({1, 4, 1, 1});
  t.at({0, 0, 0, 0}) = 0.0;
  t.at({0, 1, 0, 0}) = 3.0;
  t.at({0, 2, 0, 0}) = 0.0;
  t.at({0, 3, 0, 0}) = 1.0;
  CHECK(group_pool(GroupFeature(t)).item() == 3.0);

  // constant fiber: value passes through, gradient routes to index 0
  Tensor c = Tensor::full({1, 4, 1, 1}, 2.5);
  c.set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor out = group_pool(GroupFeature(c));
    CHECK(out.item() == 2.5);
    Tensor loss = sum(out);
    tape.backward(loss);
  }
  CHECK(c.grad()[0] == 1.0);
  CHECK(c.grad()[1] == 0.0);
  CHECK(c.grad()[2] == 0.0);
  CHECK(c.grad()[3] == 0.0);

  Rng rng(137);
  GroupFeature f = random_feature(rng, 2, 4, 5, 5);
  for (int g = 1; g < 4; ++g) {
    Tensor lhs = group_pool(act_group_feature(g, f));
    Tensor rhs = rotate_image(group_pool(f), g, 4);
    CHECK(max_abs_diff(lhs, rhs) == 0.0);
  }
}

TEST_CASE("orientation_align examples") {
  // theta = 0 is the identity
  Rng rng(139);
  GroupFeature f = random_feature(rng, 2, 4, 3, 3);
  Tensor zero_theta = Tensor::zeros({3, 3});
  CHECK(max_abs_diff(orientation_align(f, zero_theta).tensor, f.tensor) == 0.0);

  // N=4 fiber [4,0,0,0], theta=pi/4: r=0, alpha=0.5 -> [2,0,0,2]
  Tensor t = Tensor::zeros({1, 4, 1, 1});
  t.at({0, 0, 0, 0}) = 4.0;
  Tensor theta = Tensor::full({1, 1}, kPi / 4.0);
  Tensor out = orientation_align(GroupFeature(t), theta).tensor;
  CHECK(out.at({0, 0, 0, 0}) == doctest::Approx(2.0));
  CHECK(out.at({0, 1, 0, 0}) == doctest::Approx(0.0));
  CHECK(out.at({0, 2, 0, 0}) == doctest::Approx(0.0));
  CHECK(out.at({0, 3, 0, 0}) == doctest::Approx(2.0));
}

TEST_CASE("orientation_align with integer shifts has no interpolation residue") {
  Rng rng(149);
  GroupFeature f = random_feature(rng, 2, 8, 3, 3);
  for (int r = 0; r < 8; ++r) {
    Tensor theta = Tensor::full({3, 3}, 2.0 * kPi * r / 8.0);
    Tensor out = orientation_align(f, theta).tensor;
    // equals a pure cyclic shift
    for (int c = 0; c < 2; ++c)
      for (int n = 0; n < 8; ++n) {
        Tensor got = select(select(out, 0, c), 0, n);
        Tensor want = select(select(f.tensor, 0, c), 0, (n + r) % 8);
        CHECK(max_abs_diff(got, want) < 1e-12);
      }
  }
}

TEST_CASE("orientation_align cancellation against the group action") {
  // aligning by an angle that tracks the rotation cancels the permutation
  Rng rng(151);
  double worst = 0.0;
  for (int t = 0; t < 4; ++t) {
    GroupFeature f = random_feature(rng, 2, 8, 5, 5);
    Tensor theta = random_tensor(rng, {5, 5}, 2.0);
    for (int g = 2; g < 8; g += 2) {  // quarter turns of C8
      Tensor theta_rot = add_scalar(rotate_image(theta, g, 8), 2.0 * kPi * g / 8.0);
      Tensor lhs = orientation_align(act_group_feature(g, f), theta_rot).tensor;
      Tensor rhs = rotate_image(orientation_align(f, theta).tensor, g, 8);
      worst = std::max(worst, max_abs_diff(lhs, rhs));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("orientation_align rejects mismatched theta") {
  Rng rng(157);
  GroupFeature f = random_feature(rng, 1, 4, 3, 3);
  CHECK_THROWS_AS(orientation_align(f, Tensor::zeros({2, 3})), std::invalid_argument);
}
