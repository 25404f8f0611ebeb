// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"
#include "test_helpers.hpp"
#include "timotion/losses.hpp"

using namespace timotion;
namespace ad = timotion::ad;
using ad::Tape;
using tt::random_array;

namespace {

// generator clip plus noise, so no loss term sits at a degenerate zero
Array noisy(const Array& base, Rng& rng, double scale = 0.1) {
  Array out = base;
  for (double& v : out.data) v += scale * rng.normal();
  return out;
}

MotionPair sample_pair(int64_t L, uint64_t seed) {
  return generate_synthetic_pair(desk_skeleton(), Scenario::kApproachHandshake, L, seed);
}

}  // namespace

TEST_CASE("reconstruction error is an exact mean square") {
  SkeletonSpec spec = desk_skeleton();
  MotionPair p = sample_pair(8, 1);
  Tape t;
  ad::Var ga = t.leaf(p.a), gb = t.leaf(p.b);

  CHECK(l_simple(ga, gb, ga, gb, 8).val().data[0] == 0.0);

  Array off_a = p.a, off_b = p.b;
  for (double& v : off_a.data) v += 1.0;
  for (double& v : off_b.data) v += 1.0;
  double got = l_simple(t.leaf(off_a), t.leaf(off_b), ga, gb, 8).val().data[0];
  CHECK(std::fabs(got - 1.0) < 1e-12);

  Rng rng(2);
  Array na = noisy(p.a, rng), nb = noisy(p.b, rng);
  auto f = [&](Tape& tp, const std::vector<ad::Var>& in) {
    return l_simple(in[0], in[1], tp.leaf(p.a), tp.leaf(p.b), 6);
  };
  CHECK(ad::grad_check(f, {na, nb}) <= 1e-6);
}

TEST_CASE("velocity loss ignores constant offsets") {
  SkeletonSpec spec = desk_skeleton();
  FrameLayout lay(spec.joint_count);
  MotionPair p = sample_pair(10, 3);
  Tape t;
  ad::Var gt = t.leaf(p.a);
  CHECK(l_vel(gt, gt, spec, 10).val().data[0] == 0.0);

  Array shifted = p.a;
  for (int64_t r = 0; r < 10; ++r) {
    for (int64_t j = 0; j < spec.joint_count; ++j) {
      for (int64_t k = 0; k < 3; ++k) shifted.at(r, lay.pos(j) + k) += 0.37;
    }
  }
  CHECK(l_vel(t.leaf(shifted), gt, spec, 10).val().data[0] < 1e-28);

  Rng rng(4);
  Array np = noisy(p.a, rng);
  auto f = [&](Tape& tp, const std::vector<ad::Var>& in) {
    return l_vel(in[0], tp.leaf(p.a), spec, 8);
  };
  CHECK(ad::grad_check(f, {np}) <= 1e-6);
}

TEST_CASE("foot loss punishes only sliding planted feet") {
  SkeletonSpec spec = desk_skeleton();
  MotionPair p = sample_pair(10, 5);
  Rng rng(6);
  Array pred = noisy(p.a, rng);
  Tape t;

  SUBCASE("no contact, no loss") {
    Array zero_contacts = Array::zeros({10, 4});
    CHECK(l_foot(t.leaf(pred), zero_contacts, spec, 10).val().data[0] == 0.0);
  }
  SUBCASE("planted static feet cost nothing") {
    Array still = Array::zeros({10, frame_dim(spec)});
    Array ones = Array::full({10, 4}, 1.0);
    CHECK(l_foot(t.leaf(still), ones, spec, 10).val().data[0] == 0.0);
  }
  SUBCASE("a sliding planted foot raises the loss") {
    FrameLayout lay(spec.joint_count);
    Array slide = Array::zeros({10, frame_dim(spec)});
    for (int64_t r = 0; r < 10; ++r) slide.at(r, lay.pos(3) + 0) = 0.1 * static_cast<double>(r);
    Array ones = Array::full({10, 4}, 1.0);
    double got = l_foot(t.leaf(slide), ones, spec, 10).val().data[0];
    // one of two feet slides 0.1 per frame: mean over 2 feet x 9 diffs x 3 axes
    double want = 9.0 * 0.01 / (2.0 * 9.0 * 3.0);
    CHECK(std::fabs(got - want) < 1e-12);
  }
  SUBCASE("gradient") {
    Array contacts({10, 4});
    for (double& v : contacts.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    auto f = [&](Tape& tp, const std::vector<ad::Var>& in) {
      return l_foot(in[0], contacts, spec, 9);
    };
    CHECK(ad::grad_check(f, {pred}) <= 1e-6);
  }
}

TEST_CASE("bone length loss is zero on generated clips and analytic under scaling") {
  SkeletonSpec spec = desk_skeleton();
  FrameLayout lay(spec.joint_count);
  MotionPair p = sample_pair(12, 7);
  Tape t;
  CHECK(l_bl(t.leaf(p.a), spec, 12).val().data[0] < 1e-10);

  // doubling all positions doubles every bone, so the loss is mean rest^2
  Array big = p.a;
  for (int64_t r = 0; r < 12; ++r) {
    for (int64_t j = 0; j < spec.joint_count; ++j) {
      for (int64_t k = 0; k < 3; ++k) big.at(r, lay.pos(j) + k) *= 2.0;
    }
  }
  double want = 0.0;
  for (int64_t j = 1; j < spec.joint_count; ++j) want += spec.bone_length[j] * spec.bone_length[j];
  want /= static_cast<double>(spec.joint_count - 1);
  CHECK(std::fabs(l_bl(t.leaf(big), spec, 12).val().data[0] - want) < 1e-10);

  Rng rng(8);
  Array pred = noisy(p.a, rng);
  auto f = [&](Tape& tp, const std::vector<ad::Var>& in) { return l_bl(in[0], spec, 10); };
  CHECK(ad::grad_check(f, {pred}) <= 1e-6);
}

TEST_CASE("distance map loss masks to nearby ground truth") {
  SkeletonSpec spec = desk_skeleton();
  FrameLayout lay(spec.joint_count);
  MotionPair p = sample_pair(8, 9);
  Tape t;
  ad::Var ga = t.leaf(p.a), gb = t.leaf(p.b);
  CHECK(l_dm(ga, gb, p.a, p.b, spec, 8).val().data[0] == 0.0);

  // push person b ten meters away: every mask entry clears
  Array far = p.b;
  for (int64_t r = 0; r < 8; ++r) {
    for (int64_t j = 0; j < spec.joint_count; ++j) far.at(r, lay.pos(j) + 0) += 10.0;
  }
  Rng rng(10);
  Array pred_a = noisy(p.a, rng), pred_b = noisy(far, rng);
  CHECK(l_dm(t.leaf(pred_a), t.leaf(pred_b), p.a, far, spec, 8).val().data[0] == 0.0);

  auto f = [&](Tape& tp, const std::vector<ad::Var>& in) {
    return l_dm(in[0], in[1], p.a, p.b, spec, 6);
  };
  Array na = noisy(p.a, rng), nb = noisy(p.b, rng);
  CHECK(ad::grad_check(f, {na, nb}) <= 1e-6);
}

TEST_CASE("distance map matches a hand-computed two-joint case") {
  SkeletonSpec two;
  two.joint_count = 2;
  two.parent = {0, 0};
  two.bone_length = {0.0, 0.5};
  FrameLayout lay(2);

  auto place = [&](Array& seq, double x0, double x1) {
    seq.at(0, lay.pos(0) + 0) = x0;
    seq.at(0, lay.pos(1) + 0) = x1;
  };
  Array gt_a = Array::zeros({1, lay.width()}), gt_b = Array::zeros({1, lay.width()});
  place(gt_a, 0.0, 0.3);
  place(gt_b, 0.5, 2.0);
  Array pd_a = gt_a, pd_b = gt_b;
  place(pd_a, 0.05, 0.25);
  place(pd_b, 0.55, 1.9);

  double expect = 0.0;
  int terms = 0;
  double ax[2] = {0.0, 0.3}, bx[2] = {0.5, 2.0};
  double pax[2] = {0.05, 0.25}, pbx[2] = {0.55, 1.9};
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 2; ++k) {
      double d_gt = std::fabs(ax[i] - bx[k]);
      if (d_gt >= 1.0) continue;
      double d_pred = std::fabs(pax[i] - pbx[k]);
      expect += (d_pred - d_gt) * (d_pred - d_gt);
      ++terms;
    }
  }
  expect /= terms;

  Tape t;
  double got = l_dm(t.leaf(pd_a), t.leaf(pd_b), gt_a, gt_b, two, 1).val().data[0];
  CHECK(std::fabs(got - expect) <= 1e-12);
}

TEST_CASE("relative orientation loss sees only the offset between persons") {
  SkeletonSpec spec = desk_skeleton();
  FrameLayout lay(spec.joint_count);
  MotionPair p = generate_synthetic_pair(spec, Scenario::kCircleAround, 8, 13);
  Tape t;
  ad::Var ga = t.leaf(p.a), gb = t.leaf(p.b);
  CHECK(l_ro(ga, gb, p.a, p.b, spec, 8).val().data[0] == 0.0);

  // rotate both roots by one global rotation: the relative pose is unchanged
  double ang = 0.9;
  double g[3][3] = {{std::cos(ang), -std::sin(ang), 0.0},
                    {std::sin(ang), std::cos(ang), 0.0},
                    {0.0, 0.0, 1.0}};
  auto rotate_root = [&](Array& seq) {
    for (int64_t r = 0; r < seq.rows(); ++r) {
      for (int col = 0; col < 2; ++col) {
        double v[3];
        for (int i = 0; i < 3; ++i) v[i] = seq.at(r, lay.rot(0) + 3 * col + i);
        for (int i = 0; i < 3; ++i) {
          seq.at(r, lay.rot(0) + 3 * col + i) = g[i][0] * v[0] + g[i][1] * v[1] + g[i][2] * v[2];
        }
      }
    }
  };
  Array ra = p.a, rb = p.b;
  rotate_root(ra);
  rotate_root(rb);
  CHECK(l_ro(t.leaf(ra), t.leaf(rb), p.a, p.b, spec, 8).val().data[0] < 1e-24);

  Rng rng(14);
  Array na = noisy(p.a, rng, 0.2), nb = noisy(p.b, rng, 0.2);
  auto f = [&](Tape& tp, const std::vector<ad::Var>& in) {
    return l_ro(in[0], in[1], p.a, p.b, spec, 8);
  };
  CHECK(ad::grad_check(f, {na, nb}) <= 1e-5);
}

TEST_CASE("total loss is the pinned weighted sum of its parts") {
  SkeletonSpec spec = desk_skeleton();
  MotionPair p = sample_pair(10, 15);
  LossWeights w;
  CHECK(w.vel == 30.0);
  CHECK(w.foot == 30.0);
  CHECK(w.bone == 10.0);
  CHECK(w.dist == 3.0);
  CHECK(w.rel_orient == 0.01);

  SUBCASE("perfect prediction costs nothing") {
    Tape t;
    LossTerms terms = total_loss(t, t.leaf(p.a), t.leaf(p.b), p.a, p.b, spec, w, 10);
    // The bone term measures against rest lengths, so rotation round-off in
    // the clip itself leaves a ~1e-32 residue; every data-relative term is 0.
    CHECK(terms.simple.val().data[0] == 0.0);
    CHECK(terms.vel.val().data[0] == 0.0);
    CHECK(terms.dist.val().data[0] == 0.0);
    CHECK(terms.rel_orient.val().data[0] == 0.0);
    CHECK(terms.total.val().data[0] < 1e-20);
  }
  SUBCASE("components stay non-negative and combine linearly") {
    Rng rng(16);
    Array na = noisy(p.a, rng), nb = noisy(p.b, rng);
    Tape t;
    LossTerms terms = total_loss(t, t.leaf(na), t.leaf(nb), p.a, p.b, spec, w, 10);
    double parts[6] = {terms.simple.val().data[0], terms.vel.val().data[0],
                       terms.foot.val().data[0],   terms.bone.val().data[0],
                       terms.dist.val().data[0],   terms.rel_orient.val().data[0]};
    for (double v : parts) CHECK(v >= 0.0);
    double want = parts[0] + 30.0 * parts[1] + 30.0 * parts[2] + 10.0 * parts[3] +
                  3.0 * parts[4] + 0.01 * parts[5];
    CHECK(std::fabs(terms.total.val().data[0] - want) < 1e-12 * (1.0 + want));
  }
  SUBCASE("zero weights reduce the total to the reconstruction term") {
    Rng rng(17);
    Array na = noisy(p.a, rng), nb = noisy(p.b, rng);
    LossWeights none;
    none.vel = none.foot = none.bone = none.dist = none.rel_orient = 0.0;
    Tape t;
    LossTerms terms = total_loss(t, t.leaf(na), t.leaf(nb), p.a, p.b, spec, none, 10);
    CHECK(terms.total.val().data[0] == terms.simple.val().data[0]);
  }
  SUBCASE("whole objective passes a gradient check") {
    Rng rng(18);
    Array na = noisy(p.a, rng), nb = noisy(p.b, rng);
    auto f = [&](Tape& tp, const std::vector<ad::Var>& in) {
      return total_loss(tp, in[0], in[1], p.a, p.b, spec, w, 8).total;
    };
    CHECK(ad::grad_check(f, {na, nb}) <= 1e-4);
  }
}

TEST_CASE("losses reject malformed inputs") {
  SkeletonSpec spec = desk_skeleton();
  MotionPair p = sample_pair(8, 19);
  Tape t;
  ad::Var a = t.leaf(p.a), b = t.leaf(p.b);

  CHECK_THROWS_AS(l_vel(a, b, spec, 1), UsageError);
  CHECK_THROWS_AS(l_simple(a, b, a, b, 9), DimensionError);
  CHECK_THROWS_AS(l_dm(a, b, p.a, p.b, spec, 8, 0.0), UsageError);

  Array bad_contacts = Array::zeros({8, 3});
  CHECK_THROWS_AS(l_foot(a, bad_contacts, spec, 8), DimensionError);

  SkeletonSpec footless = spec;
  footless.foot_joints.clear();
  Array contacts = Array::zeros({8, 4});
  CHECK_THROWS_AS(l_foot(a, contacts, footless, 8), ConfigError);

  Array narrow = Array::zeros({8, 10});
  CHECK_THROWS_AS(l_bl(t.leaf(narrow), spec, 8), DimensionError);
}
