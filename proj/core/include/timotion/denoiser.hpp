// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "timotion/lpa.hpp"
#include "timotion/mixing.hpp"
#include "timotion/motion.hpp"
#include "timotion/params.hpp"
#include "timotion/tape.hpp"

namespace timotion {

// How the two person streams are wired through a block. The full model
// interleaves the persons' frames into one sequence, mixes both role
// assignments, and adds a per-person convolution branch. The reduced variants
// exist for parameter and quality comparisons.
enum class ModelVariant {
  kSeparate,      // per-person self-attention plus cross-attention, no interleaving
  kInterleaved,   // one interleaved stream, split back by row parity
  kRoleEvolving,  // + channel-concatenated role views, split-and-merge output
  kFull,          // + per-person conv branch fused back in
};

ModelVariant parse_variant(const std::string& name);
std::string variant_name(ModelVariant v);

struct DenoiserConfig {
  int64_t embed_width = 64;  // per-person channels in the full model; must be even
  int64_t blocks = 2;
  int64_t joints = 5;
  int64_t max_len = 32;  // longest clip; position tables cover 2*max_len rows
  int64_t vocab = 64;
  double cfg_dropout = 0.10;  // chance a training example sees the null condition
  double guidance = 3.5;      // sampling-time guidance weight
  ModelVariant variant = ModelVariant::kFull;
  MixingConfig mixing;  // backend, heads, layers, ff_mult; widths are derived
  LpaConfig lpa;

  int64_t frame_width() const { return FrameLayout(joints).width(); }
  // The mixed sequence always carries both persons' channels.
  int64_t backbone_width() const { return 2 * embed_width; }
  // Channel count of one person's stream between blocks. Role concatenation
  // halves it, since the two role views are stacked to fill the backbone.
  int64_t person_width() const;
  MixingConfig mixing_config() const;  // widths filled in
  void validate() const;
};

// The conditioning vector pieces, kept on the tape so the embedding tables
// train with the rest of the model.
struct ConditionEmbedding {
  ad::Var timestep;  // 1 x embed_width
  ad::Var text;      // 1 x embed_width; exactly zero when null
  bool null_cond = false;
  ad::Var combined;  // timestep + text
};

// [sin(t w_0), cos(t w_0), sin(t w_1), ...] with w_i = 10000^(-2i/dim).
Array timestep_sinusoid(int64_t step, int64_t dim);

// Query stream attends into a context stream. Used by the separate-modeling
// baseline, where each person's stream queries the other's.
struct CrossAttentionLayer {
  int64_t width = 0, heads = 0;
  AdaLn norm_q;
  ad::Parameter *wq, *bq, *wk, *wv, *bv, *wo, *bo;

  static CrossAttentionLayer create(ParamRegistry& reg, const std::string& prefix,
                                    const MixingConfig& cfg, Rng& rng);
  ad::Var forward(ad::Tape& t, ad::Var x, ad::Var context, ad::Var cond) const;
};

// One block of the denoiser: position-tagged sequence mixing over both
// persons (wiring per ModelVariant) plus, in the full variant, the local
// convolution branch and its fusion. Fresh blocks are the identity map for
// every variant except kRoleEvolving, which doubles its input (the two role
// views both carry it).
struct TimotionBlock {
  ModelVariant variant{};
  int64_t person_width = 0;
  ad::Parameter* pos = nullptr;  // 2*max_len x backbone, zero-init
  MixingStack mixing;
  CrossAttentionLayer cross;  // kSeparate only
  LpaBlock local;             // kFull only
  FuseLinear fuse;            // kFull only

  static TimotionBlock create(ParamRegistry& reg, const std::string& prefix,
                              const DenoiserConfig& cfg, Rng& rng);
  std::pair<ad::Var, ad::Var> forward(ad::Tape& t, ad::Var x_a, ad::Var x_b, ad::Var cond) const;
};

// The conditional denoiser: input projection to the embedding width, a stack
// of blocks, and a zero-initialized output projection back to frame width.
// Predicts the clean sample; the noise estimate follows from the forward-
// process identity.
struct Denoiser {
  DenoiserConfig cfg;
  ParamRegistry reg;
  ad::Parameter* token_emb = nullptr;  // vocab x embed_width
  ad::Parameter *time_w = nullptr, *time_b = nullptr;
  ad::Parameter *in_w = nullptr, *in_b = nullptr;
  ad::Parameter *out_w = nullptr, *out_b = nullptr;
  std::vector<TimotionBlock> blocks;

  Denoiser() = default;
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;
  Denoiser(Denoiser&&) = default;
  Denoiser& operator=(Denoiser&&) = default;

  static Denoiser create(const DenoiserConfig& cfg, uint64_t seed);

  ConditionEmbedding embed_condition(ad::Tape& t, int64_t step,
                                     const std::vector<uint32_t>& tokens, bool null_cond) const;
  std::pair<ad::Var, ad::Var> forward(ad::Tape& t, ad::Var x_a, ad::Var x_b,
                                      const ConditionEmbedding& cond) const;
  // Convenience for samplers: one forward pass on a private tape, no gradients.
  std::pair<Array, Array> predict(const Array& x_a, const Array& x_b, int64_t step,
                                  const std::vector<uint32_t>& tokens, bool null_cond) const;
};

int64_t count_parameters(const DenoiserConfig& cfg);

// Checkpoint: config echo, training step, then every parameter by name, in
// registry order, little-endian f64.
void save_checkpoint(const std::string& path, const Denoiser& model, int64_t step);
Denoiser load_checkpoint(const std::string& path, int64_t* step = nullptr);

}  // namespace timotion
