// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include "timotion/temporal.hpp"

namespace timotion {

namespace {

CausalSequence interleave_with_lead(ad::Var first, ad::Var second, int first_person) {
  const Array& xf = first.val();
  const Array& xs = second.val();
  check_rank2(xf, "interleave");
  check_same_shape(xf, xs, "interleave");
  int64_t L = xf.rows();
  ad::Var stacked = ad::concat_rows(first, second);  // first in rows [0, L)
  std::vector<int64_t> idx(static_cast<size_t>(2 * L));
  std::vector<RowOrigin> origin(static_cast<size_t>(2 * L));
  for (int64_t i = 0; i < L; ++i) {
    idx[static_cast<size_t>(2 * i)] = i;
    idx[static_cast<size_t>(2 * i + 1)] = L + i;
    origin[static_cast<size_t>(2 * i)] = RowOrigin{first_person, i};
    origin[static_cast<size_t>(2 * i + 1)] = RowOrigin{1 - first_person, i};
  }
  return CausalSequence{ad::gather_rows(stacked, std::move(idx)), std::move(origin)};
}

std::vector<int64_t> rows_tagged(const std::vector<RowOrigin>& origin, int person) {
  // Row positions of one person, ordered by source frame.
  std::vector<int64_t> pos(origin.size() / 2, -1);
  for (size_t r = 0; r < origin.size(); ++r) {
    if (origin[r].person == person) pos[static_cast<size_t>(origin[r].frame)] = static_cast<int64_t>(r);
  }
  for (int64_t p : pos) {
    if (p < 0) throw UsageError("deinterleave: provenance tags do not cover every frame");
  }
  return pos;
}

}  // namespace

CausalSequence causal_interleave(ad::Var x_a, ad::Var x_b) {
  return interleave_with_lead(x_a, x_b, 0);
}

CausalSequence symmetric_interleave(ad::Var x_a, ad::Var x_b) {
  return interleave_with_lead(x_b, x_a, 1);
}

ad::Var role_evolving_concat(const CausalSequence& causal, const CausalSequence& swapped) {
  if (causal.origin.size() != swapped.origin.size()) {
    throw DimensionError("role_evolving_concat: sequence lengths differ, " +
                         shape_to_string(causal.rows.val().shape) + " vs " +
                         shape_to_string(swapped.rows.val().shape));
  }
  return ad::concat_cols(causal.rows, swapped.rows);
}

std::pair<ad::Var, ad::Var> deinterleave(const CausalSequence& seq) {
  const Array& x = seq.rows.val();
  if (static_cast<size_t>(x.rows()) != seq.origin.size()) {
    throw DimensionError("deinterleave: tag count " + std::to_string(seq.origin.size()) +
                         " does not match shape " + shape_to_string(x.shape));
  }
  return {ad::gather_rows(seq.rows, rows_tagged(seq.origin, 0)),
          ad::gather_rows(seq.rows, rows_tagged(seq.origin, 1))};
}

std::pair<ad::Var, ad::Var> split_and_merge(ad::Var y) {
  const Array& v = y.val();
  check_rank2(v, "split_and_merge");
  if (v.rows() % 2 != 0 || v.cols() % 2 != 0) {
    throw DimensionError("split_and_merge: extents must be even, got shape " +
                         shape_to_string(v.shape));
  }
  int64_t L = v.rows() / 2;
  int64_t C = v.cols() / 2;
  auto [left, right] = ad::split_cols(y, C);
  std::vector<int64_t> even(static_cast<size_t>(L)), odd(static_cast<size_t>(L));
  for (int64_t i = 0; i < L; ++i) {
    even[static_cast<size_t>(i)] = 2 * i;
    odd[static_cast<size_t>(i)] = 2 * i + 1;
  }
  ad::Var y_a = ad::add(ad::gather_rows(left, even), ad::gather_rows(right, odd));
  ad::Var y_b = ad::add(ad::gather_rows(left, odd), ad::gather_rows(right, even));
  return {y_a, y_b};
}

}  // namespace timotion
