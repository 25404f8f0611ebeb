// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "timotion/params.hpp"
#include "timotion/tape.hpp"

namespace timotion {

// Adaptive layer norm: per-row normalization followed by a conditioned scale
// and shift,
//   y = norm(x) * (1 + s(e)) + b(e),
// with s and b linear in the condition vector. Both maps start at zero so the
// modulation begins as plain layer norm.
struct AdaLn {
  ad::Parameter* w_scale = nullptr;  // cond_width x width
  ad::Parameter* b_scale = nullptr;  // 1 x width
  ad::Parameter* w_shift = nullptr;
  ad::Parameter* b_shift = nullptr;

  static AdaLn create(ParamRegistry& reg, const std::string& prefix, int64_t cond_width,
                      int64_t width) {
    AdaLn m;
    m.w_scale = &reg.create(prefix + ".scale.w", Array::zeros({cond_width, width}));
    m.b_scale = &reg.create(prefix + ".scale.b", Array::zeros({1, width}));
    m.w_shift = &reg.create(prefix + ".shift.w", Array::zeros({cond_width, width}));
    m.b_shift = &reg.create(prefix + ".shift.b", Array::zeros({1, width}));
    return m;
  }

  // x: N x width, cond: 1 x cond_width.
  ad::Var apply(ad::Tape& t, ad::Var x, ad::Var cond) const {
    int64_t n = x.val().rows();
    ad::Var s = ad::linear(cond, t.param(*w_scale), t.param(*b_scale));
    ad::Var b = ad::linear(cond, t.param(*w_shift), t.param(*b_shift));
    ad::Var y = ad::layer_norm_rows(x);
    y = ad::mul(y, ad::affine(ad::repeat_rows(s, n), 1.0, 1.0));
    return ad::add(y, ad::repeat_rows(b, n));
  }
};

}  // namespace timotion
