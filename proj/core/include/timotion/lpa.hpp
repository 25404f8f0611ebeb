// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "timotion/modulation.hpp"
#include "timotion/params.hpp"
#include "timotion/tape.hpp"

namespace timotion {

enum class LpaNorm { kAdaln, kLn, kBn };

LpaNorm parse_lpa_norm(const std::string& name);
std::string lpa_norm_name(LpaNorm n);

struct LpaConfig {
  int64_t k1 = 3;  // first conv kernel size, odd
  int64_t k2 = 1;  // second conv kernel size, odd
  LpaNorm norm = LpaNorm::kAdaln;

  void validate() const;
};

// Per-person residual branch of two 1-D convolutions over time, each preceded
// by a normalization. The second conv starts at zero so a fresh block is the
// identity map. Both persons run through the same block (shared weights).
struct LpaBlock {
  LpaConfig cfg;
  int64_t width = 0;
  AdaLn norm1, norm2;  // only populated for the adaln variant
  ad::Parameter *w1, *b1;  // k1 x C x C, 1 x C
  ad::Parameter *w2, *b2;  // k2 x C x C, 1 x C

  static LpaBlock create(ParamRegistry& reg, const std::string& prefix, const LpaConfig& cfg,
                         int64_t width, int64_t cond_width, Rng& rng);
  // x: L x C, cond: 1 x cond_width (ignored by the ln and bn variants).
  ad::Var forward(ad::Tape& t, ad::Var x, ad::Var cond) const;

 private:
  ad::Var normalize(ad::Tape& t, ad::Var x, ad::Var cond, const AdaLn& n) const;
};

// Projects the channel-concatenated global and local branches back to C. The
// default init restores the identity map under a fresh block stack, where the
// global branch carries twice the block input and the local branch carries it
// once: 0.25 * 2x + 0.5 * x = x.
struct FuseLinear {
  int64_t width = 0;
  ad::Parameter *w, *b;  // 2C x C, 1 x C

  static FuseLinear create(ParamRegistry& reg, const std::string& prefix, int64_t width);
  ad::Var forward(ad::Tape& t, ad::Var y_global, ad::Var y_local) const;
};

}  // namespace timotion
