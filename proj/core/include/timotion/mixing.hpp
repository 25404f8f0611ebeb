// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "timotion/modulation.hpp"
#include "timotion/params.hpp"
#include "timotion/tape.hpp"

namespace timotion {

enum class MixingBackend { kAttention, kRwkv };

MixingBackend parse_backend(const std::string& name);
std::string backend_name(MixingBackend b);

struct MixingConfig {
  MixingBackend backend = MixingBackend::kAttention;
  int64_t width = 128;      // channel count of the mixed sequence
  int64_t heads = 4;        // attention only; must divide width
  int64_t layers = 1;       // mixing layers stacked per block
  int64_t ff_mult = 4;      // attention feed-forward expansion
  int64_t cond_width = 64;  // width of the condition vector

  void validate() const;
};

// Bidirectional multi-head self-attention with a feed-forward sublayer.
// Pre-norm residual layout, condition injected through AdaLn. Output
// projections start at zero so a fresh layer is the identity map.
struct AttentionLayer {
  int64_t width = 0, heads = 0;
  AdaLn norm1, norm2;
  // No key bias: softmax is invariant to a per-row logit shift, so a key
  // bias would be dead weight with an identically zero gradient.
  ad::Parameter *wq, *bq, *wk, *wv, *bv, *wo, *bo;
  ad::Parameter *w1, *b1, *w2, *b2;

  static AttentionLayer create(ParamRegistry& reg, const std::string& prefix,
                               const MixingConfig& cfg, Rng& rng);
  ad::Var forward(ad::Tape& t, ad::Var x, ad::Var cond) const;
};

// One time-mixing plus one channel-mixing sublayer. Token shift interpolates
// each row with its predecessor (row -1 is zeros); the weighted-average
// recurrence runs through the wkv op. No biases on the internal projections.
struct RwkvLayer {
  int64_t width = 0;
  AdaLn norm1, norm2;
  ad::Parameter *mu_q, *mu_k, *mu_v;  // 1 x width, token-shift blends
  ad::Parameter *wq, *wk, *wv, *wo;
  ad::Parameter *mu_r, *mu_z;
  ad::Parameter *wr, *wz, *wout;

  static RwkvLayer create(ParamRegistry& reg, const std::string& prefix,
                          const MixingConfig& cfg, Rng& rng);
  ad::Var forward(ad::Tape& t, ad::Var x, ad::Var cond) const;
  // Exposed separately so the sublayers can be tested in isolation.
  ad::Var time_mix(ad::Tape& t, ad::Var h) const;
  ad::Var channel_mix(ad::Tape& t, ad::Var h) const;
};

// The stack of mixing layers one block applies to its merged sequence.
struct MixingStack {
  MixingConfig cfg;
  std::vector<AttentionLayer> attention;
  std::vector<RwkvLayer> rwkv;

  static MixingStack create(ParamRegistry& reg, const std::string& prefix,
                            const MixingConfig& cfg, Rng& rng);
  ad::Var forward(ad::Tape& t, ad::Var x, ad::Var cond) const;
};

// Per-head softmax(q kᵀ/√dh) v with the head outputs re-concatenated. q is
// L x width, k and v share some other row count; heads must divide width.
ad::Var multihead_attend(ad::Var q, ad::Var k, ad::Var v, int64_t heads);

// Reference evaluation of the wkv recurrence: per channel, the exp(k)-weighted
// mean over each prefix with the channel max subtracted before exponentiation.
Array wkv_bruteforce(const Array& k, const Array& v);

}  // namespace timotion
