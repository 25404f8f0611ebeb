// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include "timotion/losses.hpp"

#include <cmath>

namespace timotion {

namespace {

constexpr double kLenEps = 1e-12;  // keeps sqrt gradients finite at zero length

void check_frame_width(const Array& x, const SkeletonSpec& spec, const char* who) {
  FrameLayout lay(spec.joint_count);
  check_rank2(x, who);
  if (x.cols() != lay.width()) {
    throw DimensionError(std::string(who) + ": sequence " + shape_to_string(x.shape) +
                         " does not match frame width [" + std::to_string(lay.width()) + "]");
  }
}

int64_t checked_valid(const Array& x, int64_t valid_len, int64_t minimum, const char* who) {
  if (valid_len < minimum) {
    throw UsageError(std::string(who) + ": valid length " + std::to_string(valid_len) +
                     " is below the minimum " + std::to_string(minimum));
  }
  if (valid_len > x.rows()) {
    throw DimensionError(std::string(who) + ": valid length " + std::to_string(valid_len) +
                         " exceeds " + std::to_string(x.rows()) + " frames");
  }
  return valid_len;
}

ad::Var valid_rows(ad::Var x, int64_t valid_len) {
  return valid_len == x.val().rows() ? x : ad::slice_rows(x, 0, valid_len);
}

ad::Var forward_diff(ad::Var x) {
  int64_t n = x.val().rows();
  return ad::sub(ad::slice_rows(x, 1, n - 1), ad::slice_rows(x, 0, n - 1));
}

// row-wise Euclidean norm of an Nx3 block, as an Nx1 column
ad::Var row_norm(ad::Var x) {
  return ad::sqrt(ad::affine(ad::row_sum(ad::square(x)), 1.0, kLenEps));
}

ad::Var normalize_rows(ad::Tape& t, ad::Var x) {
  ad::Var ones = t.leaf(Array::full({x.val().rows(), 1}, 1.0));
  return ad::scale_rows(x, ad::div(ones, row_norm(x)));
}

ad::Var dot_rows(ad::Var a, ad::Var b) { return ad::row_sum(ad::mul(a, b)); }

ad::Var cross_rows(ad::Var a, ad::Var b) {
  ad::Var ax = ad::slice_cols(a, 0, 1), ay = ad::slice_cols(a, 1, 1), az = ad::slice_cols(a, 2, 1);
  ad::Var bx = ad::slice_cols(b, 0, 1), by = ad::slice_cols(b, 1, 1), bz = ad::slice_cols(b, 2, 1);
  return ad::concat_cols({ad::sub(ad::mul(ay, bz), ad::mul(az, by)),
                          ad::sub(ad::mul(az, bx), ad::mul(ax, bz)),
                          ad::sub(ad::mul(ax, by), ad::mul(ay, bx))});
}

// 6D root rotation -> three orthonormal frame columns via Gram-Schmidt
struct RotFrame {
  ad::Var c1, c2, c3;
};

RotFrame root_frame(ad::Tape& t, ad::Var seq, const SkeletonSpec& spec) {
  FrameLayout lay(spec.joint_count);
  ad::Var u = ad::slice_cols(seq, lay.rot(0), 3);
  ad::Var v = ad::slice_cols(seq, lay.rot(0) + 3, 3);
  ad::Var c1 = normalize_rows(t, u);
  ad::Var w = ad::sub(v, ad::scale_rows(c1, dot_rows(c1, v)));
  ad::Var c2 = normalize_rows(t, w);
  return {c1, c2, cross_rows(c1, c2)};
}

// first two columns of R_b^T * R_a, row-wise
ad::Var relative_6d(const RotFrame& a, const RotFrame& b) {
  return ad::concat_cols({dot_rows(b.c1, a.c1), dot_rows(b.c2, a.c1), dot_rows(b.c3, a.c1),
                          dot_rows(b.c1, a.c2), dot_rows(b.c2, a.c2), dot_rows(b.c3, a.c2)});
}

}  // namespace

ad::Var l_simple(ad::Var pred_a, ad::Var pred_b, ad::Var gt_a, ad::Var gt_b,
                 int64_t valid_len) {
  checked_valid(pred_a.val(), valid_len, 1, "l_simple");
  ad::Var ea = ad::mse(valid_rows(pred_a, valid_len), valid_rows(gt_a, valid_len));
  ad::Var eb = ad::mse(valid_rows(pred_b, valid_len), valid_rows(gt_b, valid_len));
  return ad::scale(ad::add(ea, eb), 0.5);
}

ad::Var l_vel(ad::Var pred, ad::Var gt, const SkeletonSpec& spec, int64_t valid_len) {
  check_frame_width(pred.val(), spec, "l_vel");
  checked_valid(pred.val(), valid_len, 2, "l_vel");
  FrameLayout lay(spec.joint_count);
  ad::Var p = ad::slice_cols(valid_rows(pred, valid_len), 0, 3 * lay.joints);
  ad::Var g = ad::slice_cols(valid_rows(gt, valid_len), 0, 3 * lay.joints);
  return ad::mse(forward_diff(p), forward_diff(g));
}

ad::Var l_foot(ad::Var pred, const Array& contacts, const SkeletonSpec& spec,
               int64_t valid_len) {
  check_frame_width(pred.val(), spec, "l_foot");
  checked_valid(pred.val(), valid_len, 2, "l_foot");
  if (spec.foot_joints.empty()) throw ConfigError("skeleton has no foot joints for l_foot");
  if (contacts.rows() < valid_len || contacts.cols() != 4) {
    throw DimensionError("l_foot: contact labels " + shape_to_string(contacts.shape) +
                         " do not cover [" + std::to_string(valid_len) + ", 4]");
  }
  ad::Tape& t = *pred.tape;
  FrameLayout lay(spec.joint_count);
  int64_t n = valid_len - 1;

  double weight_sum = 0.0;
  ad::Var acc = t.leaf(0.0);
  for (size_t slot = 0; slot < spec.foot_joints.size(); ++slot) {
    Array mask({n, 1});
    for (int64_t r = 0; r < n; ++r) {
      mask.at(r, 0) = contacts.at(r, static_cast<int64_t>(slot));
      weight_sum += 3.0 * mask.at(r, 0);
    }
    ad::Var p = ad::slice_cols(valid_rows(pred, valid_len),
                               lay.pos(spec.foot_joints[slot]), 3);
    ad::Var sq = ad::square(forward_diff(p));
    acc = ad::add(acc, ad::sum(ad::scale_rows(sq, t.leaf(mask))));
  }
  if (weight_sum == 0.0) return t.leaf(0.0);
  return ad::scale(acc, 1.0 / weight_sum);
}

ad::Var l_bl(ad::Var pred, const SkeletonSpec& spec, int64_t valid_len) {
  check_frame_width(pred.val(), spec, "l_bl");
  checked_valid(pred.val(), valid_len, 1, "l_bl");
  ad::Tape& t = *pred.tape;
  if (spec.joint_count < 2) return t.leaf(0.0);
  FrameLayout lay(spec.joint_count);
  ad::Var p = valid_rows(pred, valid_len);
  ad::Var acc = t.leaf(0.0);
  for (int64_t j = 1; j < spec.joint_count; ++j) {
    ad::Var d = ad::sub(ad::slice_cols(p, lay.pos(j), 3),
                        ad::slice_cols(p, lay.pos(spec.parent[j]), 3));
    // rest length pushed through the same epsilon'd norm as the prediction
    double rest = std::sqrt(spec.bone_length[j] * spec.bone_length[j] + kLenEps);
    ad::Var err = ad::affine(row_norm(d), 1.0, -rest);
    acc = ad::add(acc, ad::sum(ad::square(err)));
  }
  double terms = static_cast<double>((spec.joint_count - 1) * valid_len);
  return ad::scale(acc, 1.0 / terms);
}

ad::Var l_dm(ad::Var pred_a, ad::Var pred_b, const Array& gt_a, const Array& gt_b,
             const SkeletonSpec& spec, int64_t valid_len, double d_max) {
  check_frame_width(pred_a.val(), spec, "l_dm");
  checked_valid(pred_a.val(), valid_len, 1, "l_dm");
  if (!(d_max > 0.0)) throw UsageError("l_dm: d_max must be positive");
  ad::Tape& t = *pred_a.tape;
  FrameLayout lay(spec.joint_count);
  ad::Var pa = valid_rows(pred_a, valid_len);
  ad::Var pb = valid_rows(pred_b, valid_len);

  ad::Var acc = t.leaf(0.0);
  double count = 0.0;
  for (int64_t i = 0; i < spec.joint_count; ++i) {
    for (int64_t k = 0; k < spec.joint_count; ++k) {
      // ground-truth distances fix the proximity mask
      Array mask({valid_len, 1});
      Array ref({valid_len, 1});
      bool any = false;
      for (int64_t r = 0; r < valid_len; ++r) {
        double dx = gt_a.at(r, lay.pos(i) + 0) - gt_b.at(r, lay.pos(k) + 0);
        double dy = gt_a.at(r, lay.pos(i) + 1) - gt_b.at(r, lay.pos(k) + 1);
        double dz = gt_a.at(r, lay.pos(i) + 2) - gt_b.at(r, lay.pos(k) + 2);
        // same epsilon'd norm as the differentiable path, so a perfect
        // prediction cancels exactly
        double d = std::sqrt(dx * dx + dy * dy + dz * dz + kLenEps);
        ref.at(r, 0) = d;
        mask.at(r, 0) = d < d_max ? 1.0 : 0.0;
        if (mask.at(r, 0) != 0.0) {
          any = true;
          count += 1.0;
        }
      }
      if (!any) continue;
      ad::Var diff = ad::sub(ad::slice_cols(pa, lay.pos(i), 3), ad::slice_cols(pb, lay.pos(k), 3));
      ad::Var err = ad::sub(row_norm(diff), t.leaf(ref));
      acc = ad::add(acc, ad::sum(ad::scale_rows(ad::square(err), t.leaf(mask))));
    }
  }
  if (count == 0.0) return t.leaf(0.0);
  return ad::scale(acc, 1.0 / count);
}

ad::Var l_ro(ad::Var pred_a, ad::Var pred_b, const Array& gt_a, const Array& gt_b,
             const SkeletonSpec& spec, int64_t valid_len) {
  check_frame_width(pred_a.val(), spec, "l_ro");
  checked_valid(pred_a.val(), valid_len, 1, "l_ro");
  ad::Tape& t = *pred_a.tape;
  ad::Var pa = valid_rows(pred_a, valid_len);
  ad::Var pb = valid_rows(pred_b, valid_len);
  ad::Var ga = valid_rows(t.leaf(gt_a), valid_len);
  ad::Var gb = valid_rows(t.leaf(gt_b), valid_len);
  ad::Var rel_pred = relative_6d(root_frame(t, pa, spec), root_frame(t, pb, spec));
  ad::Var rel_gt = relative_6d(root_frame(t, ga, spec), root_frame(t, gb, spec));
  return ad::mse(rel_pred, rel_gt);
}

LossTerms total_loss(ad::Tape& t, ad::Var pred_a, ad::Var pred_b, const Array& gt_a,
                     const Array& gt_b, const SkeletonSpec& spec, const LossWeights& w,
                     int64_t valid_len, double d_max) {
  check_frame_width(gt_a, spec, "total_loss");
  check_same_shape(gt_a, gt_b, "total_loss");
  FrameLayout lay(spec.joint_count);

  Array contacts_a({gt_a.rows(), 4}), contacts_b({gt_b.rows(), 4});
  for (int64_t r = 0; r < gt_a.rows(); ++r) {
    for (int64_t slot = 0; slot < 4; ++slot) {
      contacts_a.at(r, slot) = gt_a.at(r, lay.contact(slot));
      contacts_b.at(r, slot) = gt_b.at(r, lay.contact(slot));
    }
  }

  ad::Var leaf_a = t.leaf(gt_a), leaf_b = t.leaf(gt_b);
  LossTerms out;
  out.simple = l_simple(pred_a, pred_b, leaf_a, leaf_b, valid_len);
  out.vel = ad::scale(ad::add(l_vel(pred_a, leaf_a, spec, valid_len),
                              l_vel(pred_b, leaf_b, spec, valid_len)),
                      0.5);
  out.foot = ad::scale(ad::add(l_foot(pred_a, contacts_a, spec, valid_len),
                               l_foot(pred_b, contacts_b, spec, valid_len)),
                       0.5);
  out.bone = ad::scale(ad::add(l_bl(pred_a, spec, valid_len), l_bl(pred_b, spec, valid_len)),
                       0.5);
  out.dist = l_dm(pred_a, pred_b, gt_a, gt_b, spec, valid_len, d_max);
  out.rel_orient = l_ro(pred_a, pred_b, gt_a, gt_b, spec, valid_len);

  out.total = ad::add(out.simple,
                      ad::add(ad::scale(out.vel, w.vel),
                              ad::add(ad::scale(out.foot, w.foot),
                                      ad::add(ad::scale(out.bone, w.bone),
                                              ad::add(ad::scale(out.dist, w.dist),
                                                      ad::scale(out.rel_orient, w.rel_orient))))));
  return out;
}

}  // namespace timotion
