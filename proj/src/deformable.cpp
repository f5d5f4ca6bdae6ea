// SPDX-License-Identifier: Apache-2.0

#include "equikit/deformable.hpp"

#include <cmath>

namespace equikit {

Tensor field_angle(const VectorField& ref, RiDcnDiagnostics* diag) {
  if (ref.channels() != 1)
    throw std::invalid_argument("field_angle: reference field must have one channel");
  const int h = ref.height(), w = ref.width();
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const double* v = ref.tensor.data();
  const double* vx = v;
  const double* vy = v + hw;

  Tensor out({h, w});
  double* o = out.data();
  int degenerate = 0;
  for (std::int64_t p = 0; p < hw; ++p) {
    const double r2 = vx[p] * vx[p] + vy[p] * vy[p];
    if (r2 < 1e-16) {  // magnitude < 1e-8
      o[p] = 0.0;
      ++degenerate;
    } else {
      o[p] = std::atan2(vy[p], vx[p]);
    }
  }
  if (diag) diag->degenerate_ref_pixels += degenerate;

  if (should_record({&ref.tensor})) {
    Tensor in_copy = ref.tensor, out_copy = out;
    Tape::active()->record({"field_angle", {ref.tensor}, out, [in_copy, out_copy, hw]() mutable {
       if (!in_copy.requires_grad()) return;
       const double* go = out_copy.grad();
       const double* v = in_copy.data();
       double* gi = in_copy.grad();
       for (std::int64_t p = 0; p < hw; ++p) {
         const double x = v[p], y = v[hw + p];
         const double r2 = x * x + y * y;
         if (r2 < 1e-16) continue;  // angle pinned to 0, no gradient
         gi[p] += go[p] * (-y / r2);
         gi[hw + p] += go[p] * (x / r2);
       }
     }});
  }
  return out;
}

Tensor deform_sample_conv(const Tensor& input, const OffsetField& offsets, const Tensor& weight,
                          const Tensor& modulation) {
  if (input.rank() != 3) throw std::invalid_argument("deform_sample_conv: input must be [C,H,W]");
  if (weight.rank() != 3) throw std::invalid_argument("deform_sample_conv: weight must be [C_out,C,K]");
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int c_out = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != c)
    throw std::invalid_argument("deform_sample_conv: weight channel mismatch");
  if (offsets.channels() != k)
    throw std::invalid_argument("deform_sample_conv: offset channels " +
                                std::to_string(offsets.channels()) +
                                " do not match weight taps " + std::to_string(k));
  if (offsets.height() != h || offsets.width() != w)
    throw std::invalid_argument("deform_sample_conv: offset spatial shape mismatch");
  const bool has_mod = modulation.defined();
  if (has_mod && (modulation.rank() != 3 || modulation.dim(0) != k || modulation.dim(1) != h ||
                  modulation.dim(2) != w))
    throw std::invalid_argument("deform_sample_conv: modulation must be [K,H,W]");

  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const double* in = input.data();
  const double* off = offsets.tensor.data();
  const double* wt = weight.data();
  const double* mod = has_mod ? modulation.data() : nullptr;

  Tensor out({c_out, h, w});
  double* o = out.data();
  std::vector<double> sample(static_cast<std::size_t>(c));
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const std::int64_t p = static_cast<std::int64_t>(py) * w + px;
      for (int ki = 0; ki < k; ++ki) {
        const double vx = off[(static_cast<std::int64_t>(ki) * 2) * hw + p];
        const double vy = off[(static_cast<std::int64_t>(ki) * 2 + 1) * hw + p];
        double dx, dy;
        field_vector_to_displacement(vx, vy, dx, dy);
        const double sx = px + dx, sy = py + dy;
        for (int ci = 0; ci < c; ++ci)
          sample[ci] = bilinear_read(in + static_cast<std::int64_t>(ci) * hw, h, w, sx, sy);
        const double m = has_mod ? mod[static_cast<std::int64_t>(ki) * hw + p] : 1.0;
        for (int co = 0; co < c_out; ++co) {
          const double* w_row = wt + (static_cast<std::int64_t>(co) * c) * k + ki;
          double acc = 0.0;
          for (int ci = 0; ci < c; ++ci) acc += w_row[static_cast<std::int64_t>(ci) * k] * sample[ci];
          o[static_cast<std::int64_t>(co) * hw + p] += m * acc;
        }
      }
    }
  }
  ensure_finite(out, "deform_sample_conv");

  const Tensor* mod_ptr = has_mod ? &modulation : nullptr;
  const bool record = has_mod ? should_record({&input, &offsets.tensor, &weight, mod_ptr})
                              : should_record({&input, &offsets.tensor, &weight});
  if (record) {
    Tensor in_copy = input, off_copy = offsets.tensor, w_copy = weight, out_copy = out;
    Tensor mod_copy = modulation;
    std::vector<Tensor> op_inputs{input, offsets.tensor, weight};
    if (has_mod) op_inputs.push_back(modulation);
    Tape::active()->record(
        {"deform_sample_conv", std::move(op_inputs), out,
         [in_copy, off_copy, w_copy, mod_copy, out_copy, c, h, w, c_out, k, hw, has_mod]() mutable {
           const double* go = out_copy.grad();
           const double* in = in_copy.data();
           const double* off = off_copy.data();
           const double* wt = w_copy.data();
           const double* mod = has_mod ? mod_copy.data() : nullptr;
           double* gi = in_copy.requires_grad() ? in_copy.grad() : nullptr;
           double* goff = off_copy.requires_grad() ? off_copy.grad() : nullptr;
           double* gw = w_copy.requires_grad() ? w_copy.grad() : nullptr;
           double* gm = (has_mod && mod_copy.requires_grad()) ? mod_copy.grad() : nullptr;

           std::vector<double> sample(static_cast<std::size_t>(c));
           std::vector<double> gsample(static_cast<std::size_t>(c));
           for (int py = 0; py < h; ++py) {
             for (int px = 0; px < w; ++px) {
               const std::int64_t p = static_cast<std::int64_t>(py) * w + px;
               for (int ki = 0; ki < k; ++ki) {
                 const double vx = off[(static_cast<std::int64_t>(ki) * 2) * hw + p];
                 const double vy = off[(static_cast<std::int64_t>(ki) * 2 + 1) * hw + p];
                 double dx, dy;
                 field_vector_to_displacement(vx, vy, dx, dy);
                 const double sx = px + dx, sy = py + dy;
                 for (int ci = 0; ci < c; ++ci)
                   sample[ci] = bilinear_read(in + static_cast<std::int64_t>(ci) * hw, h, w, sx, sy);
                 const double m = has_mod ? mod[static_cast<std::int64_t>(ki) * hw + p] : 1.0;

                 if (gm) {
                   double s_total = 0.0;
                   for (int co = 0; co < c_out; ++co) {
                     const double* w_row = wt + (static_cast<std::int64_t>(co) * c) * k + ki;
                     double acc = 0.0;
                     for (int ci = 0; ci < c; ++ci)
                       acc += w_row[static_cast<std::int64_t>(ci) * k] * sample[ci];
                     s_total += go[static_cast<std::int64_t>(co) * hw + p] * acc;
                   }
                   gm[static_cast<std::int64_t>(ki) * hw + p] += s_total;
                 }

                 std::fill(gsample.begin(), gsample.end(), 0.0);
                 for (int co = 0; co < c_out; ++co) {
                   const double g = go[static_cast<std::int64_t>(co) * hw + p];
                   if (g == 0.0) continue;
                   const double gmod = g * m;
                   const double* w_row = wt + (static_cast<std::int64_t>(co) * c) * k + ki;
                   double* gw_row = gw ? gw + (static_cast<std::int64_t>(co) * c) * k + ki : nullptr;
                   for (int ci = 0; ci < c; ++ci) {
                     gsample[ci] += gmod * w_row[static_cast<std::int64_t>(ci) * k];
                     if (gw_row) gw_row[static_cast<std::int64_t>(ci) * k] += gmod * sample[ci];
                   }
                 }

                 double gx_total = 0.0, gy_total = 0.0;
                 for (int ci = 0; ci < c; ++ci) {
                   const double gs = gsample[ci];
                   if (gs == 0.0) continue;
                   const std::int64_t base = static_cast<std::int64_t>(ci) * hw;
                   if (gi) bilinear_scatter(gi + base, h, w, sx, sy, gs);
                   if (goff) {
                     double gx, gy;
                     bilinear_coord_grad(in + base, h, w, sx, sy, gx, gy);
                     gx_total += gs * gx;
                     gy_total += gs * gy;
                   }
                 }
                 if (goff) {
                   // displacement = (vx, -vy)
                   goff[(static_cast<std::int64_t>(ki) * 2) * hw + p] += gx_total;
                   goff[(static_cast<std::int64_t>(ki) * 2 + 1) * hw + p] -= gy_total;
                 }
               }
             }
           }
         }});
  }
  return out;
}

GroupFeature re_dcn(const GroupFeature& feat, const OffsetField& offsets, const Tensor& weight) {
  if (weight.rank() != 3) throw std::invalid_argument("re_dcn: weight must be [C_out,C_in,K]");
  if (weight.dim(1) != feat.channels())
    throw std::invalid_argument("re_dcn: weight channel mismatch");
  if (weight.dim(2) != offsets.channels())
    throw std::invalid_argument("re_dcn: offset count " + std::to_string(offsets.channels()) +
                                " does not match weight taps " + std::to_string(weight.dim(2)));
  if (offsets.height() != feat.height() || offsets.width() != feat.width())
    throw std::invalid_argument("re_dcn: offset spatial shape mismatch");

  // Each rotation group runs independently with the shared offsets/weights.
  const int n = feat.order();
  std::vector<Tensor> planes;
  planes.reserve(n);
  for (int ni = 0; ni < n; ++ni)
    planes.push_back(deform_sample_conv(select(feat.tensor, 1, ni), offsets, weight, Tensor{}));
  return GroupFeature(stack(planes, 1));
}

Tensor ri_dcn(const GroupFeature& feat, const OffsetField& offsets, const VectorField& ref,
              const Tensor& weight, const Tensor& modulation_weight, RiDcnDiagnostics* diag) {
  const int c = feat.channels(), n = feat.order(), h = feat.height(), w = feat.width();
  if (weight.rank() != 3 || weight.dim(1) != c * n)
    throw std::invalid_argument("ri_dcn: weight must be [C_out,C_in*N,K]");
  if (weight.dim(2) != offsets.channels())
    throw std::invalid_argument("ri_dcn: offset count does not match weight taps");
  if (ref.height() != h || ref.width() != w)
    throw std::invalid_argument("ri_dcn: reference field spatial shape mismatch");

  Tensor theta = field_angle(ref, diag);
  GroupFeature aligned = orientation_align(feat, theta);
  Tensor flat = reshape(aligned.tensor, {c * n, h, w});

  Tensor modulation;  // undefined -> modulation off (m == 1)
  if (modulation_weight.defined()) {
    if (modulation_weight.rank() != 2 || modulation_weight.dim(0) != offsets.channels() ||
        modulation_weight.dim(1) != c * n)
      throw std::invalid_argument("ri_dcn: modulation weight must be [K,C_in*N]");
    const int k = modulation_weight.dim(0);
    Tensor mod_kernel = reshape(modulation_weight, {k, c * n, 1, 1});
    modulation = sigmoid(conv2d(flat, mod_kernel, 1, 0));
  }
  return deform_sample_conv(flat, offsets, weight, modulation);
}

}  // namespace equikit
