// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include "timotion/denoiser.hpp"

#include <cmath>
#include <cstring>

#include "binary_io.hpp"
#include "timotion/temporal.hpp"

namespace timotion {

ModelVariant parse_variant(const std::string& name) {
  if (name == "separate") return ModelVariant::kSeparate;
  if (name == "interleaved") return ModelVariant::kInterleaved;
  if (name == "role-evolving") return ModelVariant::kRoleEvolving;
  if (name == "full") return ModelVariant::kFull;
  throw ConfigError("unknown model variant '" + name +
                    "' (expected separate, interleaved, role-evolving, or full)");
}

std::string variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::kSeparate: return "separate";
    case ModelVariant::kInterleaved: return "interleaved";
    case ModelVariant::kRoleEvolving: return "role-evolving";
    case ModelVariant::kFull: return "full";
  }
  throw ConfigError("invalid model variant value");
}

int64_t DenoiserConfig::person_width() const {
  bool concat_roles = variant == ModelVariant::kRoleEvolving || variant == ModelVariant::kFull;
  return concat_roles ? embed_width : backbone_width();
}

MixingConfig DenoiserConfig::mixing_config() const {
  MixingConfig m = mixing;
  m.width = backbone_width();
  m.cond_width = embed_width;
  return m;
}

void DenoiserConfig::validate() const {
  if (embed_width < 2 || embed_width % 2 != 0) {
    throw ConfigError("embed width must be even and at least 2, got " +
                      std::to_string(embed_width));
  }
  if (blocks < 0) throw ConfigError("block count must be non-negative");
  if (joints < 1) throw ConfigError("joint count must be positive");
  if (max_len < 1) throw ConfigError("max length must be positive");
  if (vocab < 1) throw ConfigError("vocabulary size must be positive");
  if (!(cfg_dropout >= 0.0 && cfg_dropout < 1.0)) {
    throw ConfigError("condition dropout must lie in [0, 1)");
  }
  if (!(guidance >= 0.0) || !std::isfinite(guidance)) {
    throw ConfigError("guidance scale must be finite and non-negative");
  }
  if (variant == ModelVariant::kSeparate && mixing.backend != MixingBackend::kAttention) {
    throw ConfigError("the separate-modeling baseline only supports the attention backend");
  }
  mixing_config().validate();
  if (variant == ModelVariant::kFull) lpa.validate();
}

Array timestep_sinusoid(int64_t step, int64_t dim) {
  if (dim < 2 || dim % 2 != 0) {
    throw ConfigError("sinusoid dimension must be even and at least 2, got " +
                      std::to_string(dim));
  }
  if (step < 0) throw UsageError("timestep must be non-negative, got " + std::to_string(step));
  Array out({1, dim});
  for (int64_t i = 0; i < dim / 2; ++i) {
    double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    double ang = static_cast<double>(step) * freq;
    out.data[static_cast<size_t>(2 * i)] = std::sin(ang);
    out.data[static_cast<size_t>(2 * i + 1)] = std::cos(ang);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross attention

CrossAttentionLayer CrossAttentionLayer::create(ParamRegistry& reg, const std::string& prefix,
                                                const MixingConfig& cfg, Rng& rng) {
  cfg.validate();
  CrossAttentionLayer l;
  l.width = cfg.width;
  l.heads = cfg.heads;
  int64_t d = cfg.width;
  l.norm_q = AdaLn::create(reg, prefix + ".norm_q", cfg.cond_width, d);
  l.wq = &reg.create(prefix + ".wq", xavier_normal({d, d}, rng));
  l.bq = &reg.create(prefix + ".bq", Array::zeros({1, d}));
  l.wk = &reg.create(prefix + ".wk", xavier_normal({d, d}, rng));
  l.wv = &reg.create(prefix + ".wv", xavier_normal({d, d}, rng));
  l.bv = &reg.create(prefix + ".bv", Array::zeros({1, d}));
  l.wo = &reg.create(prefix + ".wo", Array::zeros({d, d}));
  l.bo = &reg.create(prefix + ".bo", Array::zeros({1, d}));
  return l;
}

ad::Var CrossAttentionLayer::forward(ad::Tape& t, ad::Var x, ad::Var context,
                                     ad::Var cond) const {
  const Array& xv = x.val();
  check_rank2(xv, "cross attention input");
  if (xv.cols() != width || context.val().cols() != width) {
    throw DimensionError("cross attention: input " + shape_to_string(xv.shape) +
                         " and context " + shape_to_string(context.val().shape) +
                         " must both have width " + std::to_string(width));
  }
  ad::Var q = ad::linear(norm_q.apply(t, x, cond), t.param(*wq), t.param(*bq));
  ad::Var ctx = ad::layer_norm_rows(context);
  ad::Var k = ad::matmul(ctx, t.param(*wk));
  ad::Var v = ad::linear(ctx, t.param(*wv), t.param(*bv));
  ad::Var mixed = multihead_attend(q, k, v, heads);
  return ad::add(x, ad::linear(mixed, t.param(*wo), t.param(*bo)));
}

// ---------------------------------------------------------------------------
// Block

TimotionBlock TimotionBlock::create(ParamRegistry& reg, const std::string& prefix,
                                    const DenoiserConfig& cfg, Rng& rng) {
  TimotionBlock b;
  b.variant = cfg.variant;
  b.person_width = cfg.person_width();
  MixingConfig mix = cfg.mixing_config();
  b.pos = &reg.create(prefix + ".pos", Array::zeros({2 * cfg.max_len, mix.width}));
  b.mixing = MixingStack::create(reg, prefix + ".mixing", mix, rng);
  if (cfg.variant == ModelVariant::kSeparate) {
    b.cross = CrossAttentionLayer::create(reg, prefix + ".cross", mix, rng);
  }
  if (cfg.variant == ModelVariant::kFull) {
    b.local = LpaBlock::create(reg, prefix + ".local", cfg.lpa, cfg.embed_width,
                               cfg.embed_width, rng);
    b.fuse = FuseLinear::create(reg, prefix + ".fuse", cfg.embed_width);
  }
  return b;
}

std::pair<ad::Var, ad::Var> TimotionBlock::forward(ad::Tape& t, ad::Var x_a, ad::Var x_b,
                                                   ad::Var cond) const {
  const Array& av = x_a.val();
  check_rank2(av, "block input");
  check_same_shape(av, x_b.val(), "block inputs");
  if (av.cols() != person_width) {
    throw DimensionError("block: input " + shape_to_string(av.shape) +
                         " does not match person width [" + std::to_string(person_width) + "]");
  }
  int64_t L = av.rows();
  int64_t max_rows = pos->value.rows();
  if (2 * L > max_rows) {
    throw DimensionError("block: " + std::to_string(L) +
                         " frames exceed the position table capacity of " +
                         std::to_string(max_rows / 2));
  }
  switch (variant) {
    case ModelVariant::kSeparate: {
      ad::Var p = ad::slice_rows(t.param(*pos), 0, L);
      ad::Var ha = mixing.forward(t, ad::add(x_a, p), cond);
      ad::Var hb = mixing.forward(t, ad::add(x_b, p), cond);
      return {cross.forward(t, ha, hb, cond), cross.forward(t, hb, ha, cond)};
    }
    case ModelVariant::kInterleaved: {
      CausalSequence seq = causal_interleave(x_a, x_b);
      ad::Var g = ad::add(seq.rows, ad::slice_rows(t.param(*pos), 0, 2 * L));
      return deinterleave({mixing.forward(t, g, cond), seq.origin});
    }
    case ModelVariant::kRoleEvolving:
    case ModelVariant::kFull: {
      ad::Var g = role_evolving_concat(causal_interleave(x_a, x_b),
                                       symmetric_interleave(x_a, x_b));
      g = ad::add(g, ad::slice_rows(t.param(*pos), 0, 2 * L));
      auto [ga, gb] = split_and_merge(mixing.forward(t, g, cond));
      if (variant == ModelVariant::kRoleEvolving) return {ga, gb};
      ad::Var la = local.forward(t, x_a, cond);
      ad::Var lb = local.forward(t, x_b, cond);
      return {fuse.forward(t, ga, la), fuse.forward(t, gb, lb)};
    }
  }
  throw ConfigError("invalid model variant value");
}

// ---------------------------------------------------------------------------
// Denoiser

Denoiser Denoiser::create(const DenoiserConfig& cfg, uint64_t seed) {
  cfg.validate();
  Denoiser m;
  m.cfg = cfg;
  Rng rng = Rng(seed).split("denoiser");
  int64_t c = cfg.embed_width;
  int64_t f = cfg.frame_width();
  int64_t p = cfg.person_width();
  m.token_emb = &m.reg.create("token_emb", xavier_normal({cfg.vocab, c}, rng));
  m.time_w = &m.reg.create("time.w", xavier_normal({c, c}, rng));
  m.time_b = &m.reg.create("time.b", Array::zeros({1, c}));
  m.in_w = &m.reg.create("in.w", xavier_normal({f, p}, rng));
  m.in_b = &m.reg.create("in.b", Array::zeros({1, p}));
  m.out_w = &m.reg.create("out.w", Array::zeros({p, f}));
  m.out_b = &m.reg.create("out.b", Array::zeros({1, f}));
  m.blocks.reserve(static_cast<size_t>(cfg.blocks));
  for (int64_t i = 0; i < cfg.blocks; ++i) {
    m.blocks.push_back(TimotionBlock::create(m.reg, "block" + std::to_string(i), cfg, rng));
  }
  return m;
}

ConditionEmbedding Denoiser::embed_condition(ad::Tape& t, int64_t step,
                                             const std::vector<uint32_t>& tokens,
                                             bool null_cond) const {
  ConditionEmbedding c;
  c.null_cond = null_cond;
  int64_t cw = cfg.embed_width;
  c.timestep = ad::linear(t.leaf(timestep_sinusoid(step, cw)), t.param(*time_w),
                          t.param(*time_b));
  if (null_cond || tokens.empty()) {
    c.text = t.leaf(Array::zeros({1, cw}));
  } else {
    std::vector<int64_t> idx;
    idx.reserve(tokens.size());
    for (uint32_t tok : tokens) {
      if (tok >= static_cast<uint64_t>(cfg.vocab)) {
        throw UsageError("token " + std::to_string(tok) + " is outside the vocabulary of " +
                         std::to_string(cfg.vocab));
      }
      idx.push_back(static_cast<int64_t>(tok));
    }
    ad::Var rows = ad::gather_rows(t.param(*token_emb), idx);
    double inv_n = 1.0 / static_cast<double>(tokens.size());
    ad::Var mean_w = t.leaf(Array::full({1, static_cast<int64_t>(tokens.size())}, inv_n));
    c.text = ad::matmul(mean_w, rows);
  }
  c.combined = ad::add(c.timestep, c.text);
  return c;
}

std::pair<ad::Var, ad::Var> Denoiser::forward(ad::Tape& t, ad::Var x_a, ad::Var x_b,
                                              const ConditionEmbedding& cond) const {
  const Array& av = x_a.val();
  check_rank2(av, "denoiser input");
  check_same_shape(av, x_b.val(), "denoiser inputs");
  if (av.cols() != cfg.frame_width()) {
    throw DimensionError("denoiser: input " + shape_to_string(av.shape) +
                         " does not match frame width [" + std::to_string(cfg.frame_width()) +
                         "]");
  }
  if (av.rows() < 1 || av.rows() > cfg.max_len) {
    throw DimensionError("denoiser: clip length " + std::to_string(av.rows()) +
                         " outside [1, " + std::to_string(cfg.max_len) + "]");
  }
  ad::Var ha = ad::linear(x_a, t.param(*in_w), t.param(*in_b));
  ad::Var hb = ad::linear(x_b, t.param(*in_w), t.param(*in_b));
  for (const TimotionBlock& blk : blocks) {
    std::tie(ha, hb) = blk.forward(t, ha, hb, cond.combined);
  }
  return {ad::linear(ha, t.param(*out_w), t.param(*out_b)),
          ad::linear(hb, t.param(*out_w), t.param(*out_b))};
}

std::pair<Array, Array> Denoiser::predict(const Array& x_a, const Array& x_b, int64_t step,
                                          const std::vector<uint32_t>& tokens,
                                          bool null_cond) const {
  ad::Tape t;
  ConditionEmbedding cond = embed_condition(t, step, tokens, null_cond);
  auto [ya, yb] = forward(t, t.leaf(x_a), t.leaf(x_b), cond);
  return {ya.val(), yb.val()};
}

int64_t count_parameters(const DenoiserConfig& cfg) {
  return Denoiser::create(cfg, 0).reg.total_size();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'T', 'I', 'M', 'C'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const Denoiser& model, int64_t step) {
  const DenoiserConfig& c = model.cfg;
  BinWriter w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.i64(c.embed_width);
  w.i64(c.blocks);
  w.i64(c.joints);
  w.i64(c.max_len);
  w.i64(c.vocab);
  w.f64(c.cfg_dropout);
  w.f64(c.guidance);
  w.u32(static_cast<uint32_t>(c.variant));
  w.u32(static_cast<uint32_t>(c.mixing.backend));
  w.i64(c.mixing.heads);
  w.i64(c.mixing.layers);
  w.i64(c.mixing.ff_mult);
  w.i64(c.lpa.k1);
  w.i64(c.lpa.k2);
  w.u32(static_cast<uint32_t>(c.lpa.norm));
  w.i64(step);
  std::vector<const ad::Parameter*> params = model.reg.all();
  w.u64(params.size());
  for (const ad::Parameter* p : params) {
    w.u32(static_cast<uint32_t>(p->name.size()));
    w.bytes(p->name.data(), p->name.size());
    w.u32(static_cast<uint32_t>(p->value.rank()));
    for (int64_t d : p->value.shape) w.i64(d);
    w.bytes(p->value.data.data(), p->value.data.size() * sizeof(double));
  }
  w.close();
}

Denoiser load_checkpoint(const std::string& path, int64_t* step) {
  BinReader r(path, "checkpoint");
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    r.fail_before("bad magic bytes (not a checkpoint)", 4);
  }
  uint32_t version = r.u32("version");
  if (version != kVersion) r.fail_before("unsupported version " + std::to_string(version), 4);
  DenoiserConfig c;
  c.embed_width = r.i64("embed width");
  c.blocks = r.i64("block count");
  c.joints = r.i64("joint count");
  c.max_len = r.i64("max length");
  c.vocab = r.i64("vocabulary size");
  c.cfg_dropout = r.f64("condition dropout");
  c.guidance = r.f64("guidance scale");
  uint32_t variant = r.u32("model variant");
  if (variant > static_cast<uint32_t>(ModelVariant::kFull)) {
    r.fail_before("invalid model variant " + std::to_string(variant), 4);
  }
  c.variant = static_cast<ModelVariant>(variant);
  uint32_t backend = r.u32("mixing backend");
  if (backend > static_cast<uint32_t>(MixingBackend::kRwkv)) {
    r.fail_before("invalid mixing backend " + std::to_string(backend), 4);
  }
  c.mixing.backend = static_cast<MixingBackend>(backend);
  c.mixing.heads = r.i64("head count");
  c.mixing.layers = r.i64("mixing layer count");
  c.mixing.ff_mult = r.i64("feed-forward multiplier");
  c.lpa.k1 = r.i64("first kernel size");
  c.lpa.k2 = r.i64("second kernel size");
  uint32_t norm = r.u32("conv norm kind");
  if (norm > static_cast<uint32_t>(LpaNorm::kBn)) {
    r.fail_before("invalid conv norm kind " + std::to_string(norm), 4);
  }
  c.lpa.norm = static_cast<LpaNorm>(norm);
  int64_t step_in = r.i64("training step");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    r.fail(std::string("inconsistent config: ") + e.what());
  }

  Denoiser model = Denoiser::create(c, 0);
  std::vector<ad::Parameter*> params = model.reg.all();
  uint64_t n = r.u64("parameter count");
  if (n != params.size()) {
    r.fail_before("parameter count " + std::to_string(n) + " does not match the " +
                  std::to_string(params.size()) + " this config builds", 8);
  }
  for (ad::Parameter* p : params) {
    uint32_t len = r.u32("parameter name length");
    if (len > 4096) r.fail_before("implausible name length " + std::to_string(len), 4);
    std::string name(len, '\0');
    r.bytes(name.data(), len, "parameter name");
    if (name != p->name) {
      r.fail_before("parameter name mismatch: expected '" + p->name + "', found '" + name + "'",
                    len);
    }
    uint32_t rank = r.u32("parameter rank");
    if (rank != static_cast<uint32_t>(p->value.rank())) {
      r.fail_before("parameter '" + name + "' rank " + std::to_string(rank) +
                    " does not match expected " + std::to_string(p->value.rank()), 4);
    }
    for (int64_t want : p->value.shape) {
      int64_t got = r.i64("parameter extent");
      if (got != want) {
        r.fail_before("parameter '" + name + "' extent " + std::to_string(got) +
                      " does not match expected " + std::to_string(want), 8);
      }
    }
    r.bytes(p->value.data.data(), p->value.data.size() * sizeof(double), "parameter values");
  }
  if (!r.at_eof()) r.fail("trailing data after the last parameter");
  if (step) *step = step_in;
  return model;
}

}  // namespace timotion
