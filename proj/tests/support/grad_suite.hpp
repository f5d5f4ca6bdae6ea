// SPDX-License-Identifier: Apache-2.0
//
// The gradient suite: every differentiable op, analytic gradient vs central
// finite differences on random probes. Inputs are generated away from the
// documented tie/boundary sets (bilinear cell edges, argmax ties, alignment
// integer shifts). Each case returns the worst relative error for one seed.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "equikit/deformable.hpp"
#include "equikit/detector.hpp"
#include "equikit/group.hpp"
#include "equikit/tensor_ops.hpp"
#include "equikit/vector_field.hpp"
#include "support/test_utils.hpp"

namespace equikit::testing {

struct GradCase {
  std::string name;
  std::function<double(Rng&)> run;
};

namespace detail {

// Projects a tensor to a scalar with fixed random weights so every output
// element influences the loss.
inline Tensor projection_like(Rng& rng, const Tensor& t) {
  return random_tensor(rng, t.shape());
}

template <class Forward>
double probe(Tensor& input, Rng& rng, Forward forward) {
  Tensor proj;
  auto loss_value = [&]() {
    Tensor out = forward();
    return sum(mul(out, proj)).item();
  };
  {
    Tensor out = forward();
    proj = projection_like(rng, out);
  }
  input.set_requires_grad(true);
  input.zero_grad();
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = sum(mul(forward(), proj));
    tape.backward(loss);
  }
  Tensor analytic = input.grad_tensor();
  input.set_requires_grad(false);
  return fd_check(input, analytic, loss_value, rng);
}

// Offset fields with fractional parts away from bilinear cell boundaries.
inline VectorField safe_offsets(Rng& rng, int k, int h, int w) {
  Tensor t({k, 2, h, w});
  double* p = t.data();
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(0.2, 0.8);
    p[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (rng.uniform_int(2) + mag);
  }
  return VectorField(t);
}

// Reference field whose angles stay away from integer alignment shifts.
inline VectorField safe_reference(Rng& rng, int n, int h, int w) {
  Tensor t({1, 2, h, w});
  double* p = t.data();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < hw; ++i) {
    const int r = rng.uniform_int(n);
    const double alpha = rng.uniform(0.2, 0.8);
    const double theta = (r + alpha) * 2.0 * 3.14159265358979323846 / n;
    const double mag = rng.uniform(0.6, 1.4);
    p[i] = mag * std::cos(theta);
    p[hw + i] = mag * std::sin(theta);
  }
  return VectorField(t);
}

}  // namespace detail

inline const std::vector<GradCase>& gradient_suite() {
  using detail::probe;
  static const std::vector<GradCase> cases = {
      {"conv2d/input",
       [](Rng& rng) {
         Tensor x = random_tensor(rng, {2, 5, 6});
         Tensor w = random_tensor(rng, {3, 2, 3, 3});
         return probe(x, rng, [&] { return conv2d(x, w, 1, 1); });
       }},
      {"conv2d/weight",
       [](Rng& rng) {
         Tensor x = random_tensor(rng, {2, 5, 6});
         Tensor w = random_tensor(rng, {3, 2, 3, 3});
         return probe(w, rng, [&] { return conv2d(x, w, 2, 1); });
       }},
      {"bilinear_sample/feature",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 5, 5});
         Tensor pts = uniform_tensor(rng, {4, 2}, 0.2, 3.8);
         return probe(f, rng, [&] { return bilinear_sample(f, pts); });
       }},
      {"bilinear_sample/points",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 5, 5});
         Tensor pts = uniform_tensor(rng, {4, 2}, 0.2, 3.75);
         return probe(pts, rng, [&] { return bilinear_sample(f, pts); });
       }},
      {"rotate_image/bilinear",
       [](Rng& rng) {
         Tensor x = random_tensor(rng, {2, 7, 7});
         return probe(x, rng, [&] { return rotate_image(x, 1, 8); });
       }},
      {"rotate_image/quarter",
       [](Rng& rng) {
         Tensor x = random_tensor(rng, {2, 6, 6});
         return probe(x, rng, [&] { return rotate_image(x, 2, 4); });
       }},
      {"pad_to_odd",
       [](Rng& rng) {
         Tensor x = random_tensor(rng, {2, 4, 6});
         return probe(x, rng, [&] { return pad_to_odd(x); });
       }},
      {"elementwise/mul_add_relu",
       [](Rng& rng) {
         Tensor a = random_tensor(rng, {3, 4});
         Tensor b = random_tensor(rng, {3, 4});
         return probe(a, rng, [&] { return relu(add(mul(a, b), scale(a, 0.5))); });
       }},
      {"elementwise/sigmoid_mean",
       [](Rng& rng) {
         Tensor a = random_tensor(rng, {3, 4});
         return probe(a, rng, [&] { return sigmoid(add_scalar(scale(a, 1.5), 0.3)); });
       }},
      {"add_channel_bias/bias",
       [](Rng& rng) {
         Tensor x = random_tensor(rng, {3, 4, 4});
         Tensor b = random_tensor(rng, {3});
         return probe(b, rng, [&] { return add_channel_bias(x, b); });
       }},
      {"rotate_kernel/weight",
       [](Rng& rng) {
         Tensor w = random_tensor(rng, {2, 2, 3, 3});
         return probe(w, rng, [&] { return rotate_kernel(w, 1, 8); });
       }},
      {"lift_conv/image",
       [](Rng& rng) {
         Tensor x = random_tensor(rng, {2, 5, 5});
         Tensor w = random_tensor(rng, {2, 2, 3, 3});
         return probe(x, rng, [&] { return lift_conv(x, w, 1, 1, 4).tensor; });
       }},
      {"lift_conv/weight",
       [](Rng& rng) {
         Tensor x = random_tensor(rng, {2, 5, 5});
         Tensor w = random_tensor(rng, {2, 2, 3, 3});
         return probe(w, rng, [&] { return lift_conv(x, w, 1, 1, 8).tensor; });
       }},
      {"group_conv/feature",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 4, 5, 5});
         Tensor w = random_tensor(rng, {2, 2, 4, 3, 3});
         return probe(f, rng, [&] { return group_conv(GroupFeature(f), w, 1, 1).tensor; });
       }},
      {"group_conv/weight",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 4, 5, 5});
         Tensor w = random_tensor(rng, {2, 2, 4, 3, 3});
         return probe(w, rng, [&] { return group_conv(GroupFeature(f), w, 1, 1).tensor; });
       }},
      {"group_pool",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {3, 4, 4, 4});
         return probe(f, rng, [&] { return group_pool(GroupFeature(f)); });
       }},
      {"orientation_align/feature",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 8, 4, 4});
         VectorField ref = detail::safe_reference(rng, 8, 4, 4);
         Tensor theta = field_angle(ref);
         return probe(f, rng, [&] { return orientation_align(GroupFeature(f), theta).tensor; });
       }},
      {"orientation_align/theta",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 8, 4, 4});
         VectorField ref = detail::safe_reference(rng, 8, 4, 4);
         Tensor theta = field_angle(ref);
         return probe(theta, rng, [&] { return orientation_align(GroupFeature(f), theta).tensor; });
       }},
      {"to_vector_field",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {3, 4, 4, 4});
         return probe(f, rng, [&] { return to_vector_field(GroupFeature(f)).tensor; });
       }},
      {"field_angle",
       [](Rng& rng) {
         VectorField ref = detail::safe_reference(rng, 8, 4, 4);
         return probe(ref.tensor, rng, [&] { return field_angle(VectorField(ref.tensor)); });
       }},
      {"re_dcn/feature",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 4, 5, 5});
         VectorField offs = detail::safe_offsets(rng, 3, 5, 5);
         Tensor w = random_tensor(rng, {2, 2, 3});
         return probe(f, rng, [&] { return re_dcn(GroupFeature(f), offs, w).tensor; });
       }},
      {"re_dcn/offsets",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 4, 5, 5});
         VectorField offs = detail::safe_offsets(rng, 3, 5, 5);
         Tensor w = random_tensor(rng, {2, 2, 3});
         return probe(offs.tensor, rng,
                      [&] { return re_dcn(GroupFeature(f), VectorField(offs.tensor), w).tensor; });
       }},
      {"re_dcn/weight",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 4, 5, 5});
         VectorField offs = detail::safe_offsets(rng, 3, 5, 5);
         Tensor w = random_tensor(rng, {2, 2, 3});
         return probe(w, rng, [&] { return re_dcn(GroupFeature(f), offs, w).tensor; });
       }},
      {"ri_dcn/feature",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 4, 5, 5});
         VectorField offs = detail::safe_offsets(rng, 3, 5, 5);
         VectorField ref = detail::safe_reference(rng, 4, 5, 5);
         Tensor w = random_tensor(rng, {2, 8, 3});
         Tensor mw = random_tensor(rng, {3, 8}, 0.4);
         return probe(f, rng,
                      [&] { return ri_dcn(GroupFeature(f), offs, ref, w, mw); });
       }},
      {"ri_dcn/offsets",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 4, 5, 5});
         VectorField offs = detail::safe_offsets(rng, 3, 5, 5);
         VectorField ref = detail::safe_reference(rng, 4, 5, 5);
         Tensor w = random_tensor(rng, {2, 8, 3});
         Tensor mw = random_tensor(rng, {3, 8}, 0.4);
         return probe(offs.tensor, rng, [&] {
           return ri_dcn(GroupFeature(f), VectorField(offs.tensor), ref, w, mw);
         });
       }},
      {"ri_dcn/reference",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 4, 5, 5});
         VectorField offs = detail::safe_offsets(rng, 3, 5, 5);
         VectorField ref = detail::safe_reference(rng, 4, 5, 5);
         Tensor w = random_tensor(rng, {2, 8, 3});
         Tensor mw = random_tensor(rng, {3, 8}, 0.4);
         return probe(ref.tensor, rng, [&] {
           return ri_dcn(GroupFeature(f), offs, VectorField(ref.tensor), w, mw);
         });
       }},
      {"ri_dcn/weight",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 4, 5, 5});
         VectorField offs = detail::safe_offsets(rng, 3, 5, 5);
         VectorField ref = detail::safe_reference(rng, 4, 5, 5);
         Tensor w = random_tensor(rng, {2, 8, 3});
         Tensor mw = random_tensor(rng, {3, 8}, 0.4);
         return probe(w, rng, [&] { return ri_dcn(GroupFeature(f), offs, ref, w, mw); });
       }},
      {"ri_dcn/modulation",
       [](Rng& rng) {
         Tensor f = random_tensor(rng, {2, 4, 5, 5});
         VectorField offs = detail::safe_offsets(rng, 3, 5, 5);
         VectorField ref = detail::safe_reference(rng, 4, 5, 5);
         Tensor w = random_tensor(rng, {2, 8, 3});
         Tensor mw = random_tensor(rng, {3, 8}, 0.4);
         return probe(mw, rng, [&] { return ri_dcn(GroupFeature(f), offs, ref, w, mw); });
       }},
      {"reference_field",
       [](Rng& rng) {
         Tensor pts = random_tensor(rng, {5, 2, 3, 3}, 0.7);
         return probe(pts, rng, [&] { return reference_field(VectorField(pts)).tensor; });
       }},
      {"focal_loss",
       [](Rng& rng) {
         Tensor z = random_tensor(rng, {3, 4, 4});
         std::vector<int> targets(16);
         for (auto& t : targets) t = rng.uniform_int(4) - 1;  // -1..2
         z.set_requires_grad(true);
         z.zero_grad();
         Tape tape;
         {
           Tape::Scope scope(tape);
           Tensor loss = focal_loss(z, targets, 2.0, 0.25);
           tape.backward(loss);
         }
         Tensor analytic = z.grad_tensor();
         z.set_requires_grad(false);
         return fd_check(z, analytic,
                         [&] { return focal_loss(z, targets, 2.0, 0.25).item(); }, rng, 4);
       }},
      {"localization_loss",
       [](Rng& rng) {
         const int k = 5, h = 3, w = 3, stride = 4;
         Tensor pts = random_tensor(rng, {k, 2, h, w}, 0.6);
         std::vector<SceneObject> objects;
         objects.push_back(
             {geo::box_from_center(4.0 + rng.uniform(-1, 1), 4.0 + rng.uniform(-1, 1),
                                   7.0 + rng.uniform(0, 2), 5.0, rng.uniform(0, 6.28)),
              0});
         Assignment a;
         a.cls.assign(h * w, -1);
         a.gt_index.assign(h * w, -1);
         a.cls[w + 1] = 0;  // cell (1,1) sits at image position (4,4)
         a.gt_index[w + 1] = 0;
         a.positives = 1;
         pts.set_requires_grad(true);
         pts.zero_grad();
         Tape tape;
         {
           Tape::Scope scope(tape);
           Tensor loss =
               localization_loss(VectorField(pts), a, objects, stride, 0.025, true);
           tape.backward(loss);
         }
         Tensor analytic = pts.grad_tensor();
         pts.set_requires_grad(false);
         return fd_check(pts, analytic,
                         [&] {
                           return localization_loss(VectorField(pts), a, objects, stride, 0.025,
                                                    true)
                               .item();
                         },
                         rng, 4);
       }},
  };
  return cases;
}

}  // namespace equikit::testing
