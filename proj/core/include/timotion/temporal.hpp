// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

#include "timotion/tape.hpp"

namespace timotion {

// Which person (0 = a, 1 = b) and source frame a row of an interleaved
// sequence came from. Carried alongside the data so downstream code can undo
// the merge without assuming the layout.
struct RowOrigin {
  int person;
  int64_t frame;
  bool operator==(const RowOrigin&) const = default;
};

struct CausalSequence {
  ad::Var rows;                   // 2L x C
  std::vector<RowOrigin> origin;  // one entry per row
};

// Alternating merge starting with person a: a1 b1 a2 b2 ... Row j (1-based)
// holds a[ceil(j/2)] when j is odd and b[j/2] when j is even.
CausalSequence causal_interleave(ad::Var x_a, ad::Var x_b);

// The same merge with roles swapped: b1 a1 b2 a2 ...
CausalSequence symmetric_interleave(ad::Var x_a, ad::Var x_b);

// Channel concat of the two role views, canonical ordering in the left half:
// {2L x C} + {2L x C} -> {2L x 2C}.
ad::Var role_evolving_concat(const CausalSequence& causal, const CausalSequence& swapped);

// Undo an interleave using the provenance tags only. Returns (a, b) with
// frames in ascending order.
std::pair<ad::Var, ad::Var> deinterleave(const CausalSequence& seq);

// Split a mixed {2L x 2C} sequence back into per-person streams, summing the
// two role views of each person:
//   y_a = even rows (0-based) of the left half + odd rows of the right half
//   y_b = odd rows of the left half + even rows of the right half.
std::pair<ad::Var, ad::Var> split_and_merge(ad::Var y);

}  // namespace timotion
