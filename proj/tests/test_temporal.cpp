// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "test_helpers.hpp"
#include "timotion/temporal.hpp"

using namespace timotion;
namespace ad = timotion::ad;
using ad::Tape;
using tt::random_array;

TEST_CASE("causal interleave ordering on a tiny instance") {
  Tape t;
  ad::Var a = t.leaf(Array({2, 1}, {1.0, 2.0}));
  ad::Var b = t.leaf(Array({2, 1}, {10.0, 20.0}));
  CausalSequence cs = causal_interleave(a, b);
  CHECK(cs.rows.val().data == std::vector<double>{1.0, 10.0, 2.0, 20.0});
  CausalSequence sym = symmetric_interleave(a, b);
  CHECK(sym.rows.val().data == std::vector<double>{10.0, 1.0, 20.0, 2.0});
}

TEST_CASE("provenance tags form a permutation and invert the merge") {
  Rng rng(21);
  Array xa = random_array({5, 3}, rng), xb = random_array({5, 3}, rng);
  Tape t;
  CausalSequence cs = causal_interleave(t.leaf(xa), t.leaf(xb));

  std::vector<int> seen(10, 0);
  for (const RowOrigin& o : cs.origin) seen[static_cast<size_t>(o.person * 5 + o.frame)]++;
  for (int s : seen) CHECK(s == 1);

  auto [ra, rb] = deinterleave(cs);
  CHECK(max_abs_diff(ra.val(), xa) == 0.0);
  CHECK(max_abs_diff(rb.val(), xb) == 0.0);
}

TEST_CASE("swapping persons swaps the two interleavings") {
  Rng rng(22);
  Array xa = random_array({4, 2}, rng), xb = random_array({4, 2}, rng);
  Tape t;
  ad::Var a = t.leaf(xa), b = t.leaf(xb);
  CHECK(max_abs_diff(causal_interleave(b, a).rows.val(), symmetric_interleave(a, b).rows.val()) == 0.0);
}

TEST_CASE("concat + split_and_merge round-trips to exactly twice the input") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    int64_t L = 1 + rng.uniform_int(8);
    int64_t C = 1 + rng.uniform_int(6);
    Array xa = random_array({L, C}, rng), xb = random_array({L, C}, rng);
    Tape t;
    ad::Var a = t.leaf(xa), b = t.leaf(xb);
    ad::Var mixed = role_evolving_concat(causal_interleave(a, b), symmetric_interleave(a, b));
    auto [ya, yb] = split_and_merge(mixed);
    // x + x == 2x exactly in IEEE arithmetic, so require bit equality.
    for (int64_t i = 0; i < xa.size(); ++i) {
      CHECK(ya.val().data[static_cast<size_t>(i)] == 2.0 * xa.data[static_cast<size_t>(i)]);
      CHECK(yb.val().data[static_cast<size_t>(i)] == 2.0 * xb.data[static_cast<size_t>(i)]);
    }
  }
}

TEST_CASE("gradients flow through the interleave algebra") {
  Rng rng(24);
  Array xa = random_array({3, 2}, rng), xb = random_array({3, 2}, rng);
  Array wa = random_array({3, 2}, rng), wb = random_array({3, 2}, rng);
  auto f = [&](Tape& t, const std::vector<ad::Var>& in) {
    ad::Var mixed = role_evolving_concat(causal_interleave(in[0], in[1]),
                                         symmetric_interleave(in[0], in[1]));
    auto [ya, yb] = split_and_merge(mixed);
    return ad::add(tt::weighted_sum(ya, wa), tt::weighted_sum(yb, wb));
  };
  CHECK(ad::grad_check(f, {xa, xb}) <= 1e-9);
}

TEST_CASE("split_and_merge rejects odd extents naming the shape") {
  Tape t;
  ad::Var y = t.leaf(Array::zeros({3, 4}));
  try {
    split_and_merge(y);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("[3, 4]") != std::string::npos);
  }
}
