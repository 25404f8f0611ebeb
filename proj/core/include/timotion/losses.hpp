// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "timotion/motion.hpp"
#include "timotion/tape.hpp"

namespace timotion {

struct LossWeights {
  double vel = 30.0;
  double foot = 30.0;
  double bone = 10.0;
  double dist = 3.0;
  double rel_orient = 0.01;
};

// All terms as live tape nodes so callers can inspect components and backprop
// through the total.
struct LossTerms {
  ad::Var simple, vel, foot, bone, dist, rel_orient, total;
};

// Mean squared error over both persons' valid frames, full frame width.
ad::Var l_simple(ad::Var pred_a, ad::Var pred_b, ad::Var gt_a, ad::Var gt_b,
                 int64_t valid_len);

// MSE between forward-difference velocities of predicted and ground-truth
// joint positions. Invariant to a constant position offset.
ad::Var l_vel(ad::Var pred, ad::Var gt, const SkeletonSpec& spec, int64_t valid_len);

// Contact-masked mean squared foot velocity: planted feet must not slide.
// contacts holds the ground-truth labels, one column per foot slot.
ad::Var l_foot(ad::Var pred, const Array& contacts, const SkeletonSpec& spec,
               int64_t valid_len);

// MSE between per-frame bone lengths recovered from predicted positions and
// the skeleton's rest lengths.
ad::Var l_bl(ad::Var pred, const SkeletonSpec& spec, int64_t valid_len);

// MSE between the persons' predicted and ground-truth cross-joint distance
// matrices, masked to ground-truth entries closer than d_max.
ad::Var l_dm(ad::Var pred_a, ad::Var pred_b, const Array& gt_a, const Array& gt_b,
             const SkeletonSpec& spec, int64_t valid_len, double d_max = 1.0);

// MSE between predicted and ground-truth relative root orientation, compared
// as the first two columns of person-b-inverse times person-a.
ad::Var l_ro(ad::Var pred_a, ad::Var pred_b, const Array& gt_a, const Array& gt_b,
             const SkeletonSpec& spec, int64_t valid_len);

LossTerms total_loss(ad::Tape& t, ad::Var pred_a, ad::Var pred_b, const Array& gt_a,
                     const Array& gt_b, const SkeletonSpec& spec, const LossWeights& w,
                     int64_t valid_len, double d_max = 1.0);

}  // namespace timotion
