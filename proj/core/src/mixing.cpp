// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include "timotion/mixing.hpp"

#include <cmath>

namespace timotion {

MixingBackend parse_backend(const std::string& name) {
  if (name == "attention") return MixingBackend::kAttention;
  if (name == "rwkv") return MixingBackend::kRwkv;
  throw ConfigError("unknown mixing backend '" + name + "' (expected attention or rwkv)");
}

std::string backend_name(MixingBackend b) {
  return b == MixingBackend::kAttention ? "attention" : "rwkv";
}

void MixingConfig::validate() const {
  if (width < 1) throw ConfigError("mixing width must be positive");
  if (layers < 1) throw ConfigError("mixing layers must be positive");
  if (backend == MixingBackend::kAttention) {
    if (heads < 1 || width % heads != 0) {
      throw ConfigError("attention heads (" + std::to_string(heads) +
                        ") must divide width (" + std::to_string(width) + ")");
    }
    if (ff_mult < 1) throw ConfigError("feed-forward multiplier must be positive");
  }
}

// ---------------------------------------------------------------------------
// Attention

AttentionLayer AttentionLayer::create(ParamRegistry& reg, const std::string& prefix,
                                      const MixingConfig& cfg, Rng& rng) {
  cfg.validate();
  AttentionLayer l;
  l.width = cfg.width;
  l.heads = cfg.heads;
  int64_t d = cfg.width;
  l.norm1 = AdaLn::create(reg, prefix + ".norm1", cfg.cond_width, d);
  l.norm2 = AdaLn::create(reg, prefix + ".norm2", cfg.cond_width, d);
  l.wq = &reg.create(prefix + ".attn.wq", xavier_normal({d, d}, rng));
  l.bq = &reg.create(prefix + ".attn.bq", Array::zeros({1, d}));
  l.wk = &reg.create(prefix + ".attn.wk", xavier_normal({d, d}, rng));
  l.wv = &reg.create(prefix + ".attn.wv", xavier_normal({d, d}, rng));
  l.bv = &reg.create(prefix + ".attn.bv", Array::zeros({1, d}));
  l.wo = &reg.create(prefix + ".attn.wo", Array::zeros({d, d}));
  l.bo = &reg.create(prefix + ".attn.bo", Array::zeros({1, d}));
  int64_t h = d * cfg.ff_mult;
  l.w1 = &reg.create(prefix + ".ff.w1", xavier_normal({d, h}, rng));
  l.b1 = &reg.create(prefix + ".ff.b1", Array::zeros({1, h}));
  l.w2 = &reg.create(prefix + ".ff.w2", Array::zeros({h, d}));
  l.b2 = &reg.create(prefix + ".ff.b2", Array::zeros({1, d}));
  return l;
}

ad::Var multihead_attend(ad::Var q, ad::Var k, ad::Var v, int64_t heads) {
  int64_t width = q.val().cols();
  if (heads < 1 || width % heads != 0) {
    throw ConfigError("attention heads (" + std::to_string(heads) + ") must divide width (" +
                      std::to_string(width) + ")");
  }
  int64_t dh = width / heads;
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Var> head_out;
  head_out.reserve(static_cast<size_t>(heads));
  for (int64_t hd = 0; hd < heads; ++hd) {
    ad::Var qh = ad::slice_cols(q, hd * dh, dh);
    ad::Var kh = ad::slice_cols(k, hd * dh, dh);
    ad::Var vh = ad::slice_cols(v, hd * dh, dh);
    ad::Var att = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_scale));
    head_out.push_back(ad::matmul(att, vh));
  }
  return heads == 1 ? head_out[0] : ad::concat_cols(head_out);
}

ad::Var AttentionLayer::forward(ad::Tape& t, ad::Var x, ad::Var cond) const {
  const Array& xv = x.val();
  check_rank2(xv, "attention input");
  if (xv.cols() != width) {
    throw DimensionError("attention: input " + shape_to_string(xv.shape) +
                         " does not match layer width [" + std::to_string(width) + "]");
  }
  ad::Var h = norm1.apply(t, x, cond);
  ad::Var q = ad::linear(h, t.param(*wq), t.param(*bq));
  ad::Var k = ad::matmul(h, t.param(*wk));
  ad::Var v = ad::linear(h, t.param(*wv), t.param(*bv));
  ad::Var mixed = multihead_attend(q, k, v, heads);
  x = ad::add(x, ad::linear(mixed, t.param(*wo), t.param(*bo)));

  ad::Var h2 = norm2.apply(t, x, cond);
  ad::Var ff = ad::linear(ad::relu(ad::linear(h2, t.param(*w1), t.param(*b1))),
                          t.param(*w2), t.param(*b2));
  return ad::add(x, ff);
}

// ---------------------------------------------------------------------------
// RWKV

RwkvLayer RwkvLayer::create(ParamRegistry& reg, const std::string& prefix,
                            const MixingConfig& cfg, Rng& rng) {
  cfg.validate();
  RwkvLayer l;
  l.width = cfg.width;
  int64_t d = cfg.width;
  l.norm1 = AdaLn::create(reg, prefix + ".norm1", cfg.cond_width, d);
  l.norm2 = AdaLn::create(reg, prefix + ".norm2", cfg.cond_width, d);
  l.mu_q = &reg.create(prefix + ".time.mu_q", Array::full({1, d}, 0.5));
  l.mu_k = &reg.create(prefix + ".time.mu_k", Array::full({1, d}, 0.5));
  l.mu_v = &reg.create(prefix + ".time.mu_v", Array::full({1, d}, 0.5));
  l.wq = &reg.create(prefix + ".time.wq", xavier_normal({d, d}, rng));
  l.wk = &reg.create(prefix + ".time.wk", xavier_normal({d, d}, rng));
  l.wv = &reg.create(prefix + ".time.wv", xavier_normal({d, d}, rng));
  l.wo = &reg.create(prefix + ".time.wo", Array::zeros({d, d}));
  l.mu_r = &reg.create(prefix + ".chan.mu_r", Array::full({1, d}, 0.5));
  l.mu_z = &reg.create(prefix + ".chan.mu_z", Array::full({1, d}, 0.5));
  l.wr = &reg.create(prefix + ".chan.wr", xavier_normal({d, d}, rng));
  l.wz = &reg.create(prefix + ".chan.wz", xavier_normal({d, d}, rng));
  l.wout = &reg.create(prefix + ".chan.wout", Array::zeros({d, d}));
  return l;
}

namespace {

// mu*h_t + (1-mu)*h_{t-1}, with h_{-1} = 0.
ad::Var token_shift(ad::Tape& t, ad::Var h, ad::Parameter& mu) {
  int64_t rows = h.val().rows();
  ad::Var m = ad::repeat_rows(t.param(mu), rows);
  ad::Var prev = ad::shift_rows_down(h);
  return ad::add(ad::mul(m, h), ad::mul(ad::affine(m, -1.0, 1.0), prev));
}

}  // namespace

ad::Var RwkvLayer::time_mix(ad::Tape& t, ad::Var h) const {
  ad::Var q = ad::matmul(token_shift(t, h, *mu_q), t.param(*wq));
  ad::Var k = ad::matmul(token_shift(t, h, *mu_k), t.param(*wk));
  ad::Var v = ad::matmul(token_shift(t, h, *mu_v), t.param(*wv));
  ad::Var mixed = ad::wkv(k, v);
  return ad::matmul(ad::mul(ad::sigmoid(q), mixed), t.param(*wo));
}

ad::Var RwkvLayer::channel_mix(ad::Tape& t, ad::Var h) const {
  ad::Var r = ad::matmul(token_shift(t, h, *mu_r), t.param(*wr));
  ad::Var z = ad::matmul(token_shift(t, h, *mu_z), t.param(*wz));
  return ad::matmul(ad::mul(ad::sigmoid(r), ad::square(ad::relu(z))), t.param(*wout));
}

ad::Var RwkvLayer::forward(ad::Tape& t, ad::Var x, ad::Var cond) const {
  const Array& xv = x.val();
  check_rank2(xv, "rwkv input");
  if (xv.cols() != width) {
    throw DimensionError("rwkv: input " + shape_to_string(xv.shape) +
                         " does not match layer width [" + std::to_string(width) + "]");
  }
  x = ad::add(x, time_mix(t, norm1.apply(t, x, cond)));
  x = ad::add(x, channel_mix(t, norm2.apply(t, x, cond)));
  return x;
}

// ---------------------------------------------------------------------------
// Stack

MixingStack MixingStack::create(ParamRegistry& reg, const std::string& prefix,
                                const MixingConfig& cfg, Rng& rng) {
  cfg.validate();
  MixingStack s;
  s.cfg = cfg;
  for (int64_t i = 0; i < cfg.layers; ++i) {
    std::string p = prefix + ".layer" + std::to_string(i);
    if (cfg.backend == MixingBackend::kAttention) {
      s.attention.push_back(AttentionLayer::create(reg, p, cfg, rng));
    } else {
      s.rwkv.push_back(RwkvLayer::create(reg, p, cfg, rng));
    }
  }
  return s;
}

ad::Var MixingStack::forward(ad::Tape& t, ad::Var x, ad::Var cond) const {
  for (const AttentionLayer& l : attention) x = l.forward(t, x, cond);
  for (const RwkvLayer& l : rwkv) x = l.forward(t, x, cond);
  return x;
}

// ---------------------------------------------------------------------------
// Oracle

Array wkv_bruteforce(const Array& k, const Array& v) {
  check_rank2(k, "wkv_bruteforce");
  check_same_shape(k, v, "wkv_bruteforce");
  int64_t T = k.rows(), D = k.cols();
  Array h({T, D});
  for (int64_t c = 0; c < D; ++c) {
    double m = k.at(0, c);
    for (int64_t s = 1; s < T; ++s) m = std::max(m, k.at(s, c));
    for (int64_t s = 0; s < T; ++s) {
      double num = 0.0, den = 0.0;
      for (int64_t i = 0; i <= s; ++i) {
        double w = std::exp(k.at(i, c) - m);
        num += w * v.at(i, c);
        den += w;
      }
      h.at(s, c) = num / den;
    }
  }
  return h;
}

}  // namespace timotion
