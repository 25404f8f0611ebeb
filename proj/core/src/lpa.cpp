// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include "timotion/lpa.hpp"

namespace timotion {

LpaNorm parse_lpa_norm(const std::string& name) {
  if (name == "adaln") return LpaNorm::kAdaln;
  if (name == "ln") return LpaNorm::kLn;
  if (name == "bn") return LpaNorm::kBn;
  throw ConfigError("unknown lpa norm '" + name + "' (expected adaln, ln or bn)");
}

std::string lpa_norm_name(LpaNorm n) {
  switch (n) {
    case LpaNorm::kAdaln: return "adaln";
    case LpaNorm::kLn: return "ln";
    default: return "bn";
  }
}

void LpaConfig::validate() const {
  if (k1 < 1 || k1 % 2 == 0 || k2 < 1 || k2 % 2 == 0) {
    throw ConfigError("lpa kernel sizes must be odd and at least 1, got k1=" +
                      std::to_string(k1) + " k2=" + std::to_string(k2));
  }
}

LpaBlock LpaBlock::create(ParamRegistry& reg, const std::string& prefix, const LpaConfig& cfg,
                          int64_t width, int64_t cond_width, Rng& rng) {
  cfg.validate();
  LpaBlock b;
  b.cfg = cfg;
  b.width = width;
  if (cfg.norm == LpaNorm::kAdaln) {
    b.norm1 = AdaLn::create(reg, prefix + ".norm1", cond_width, width);
    b.norm2 = AdaLn::create(reg, prefix + ".norm2", cond_width, width);
  }
  b.w1 = &reg.create(prefix + ".conv1.w", xavier_normal({cfg.k1, width, width}, rng));
  // The bn variant normalizes per channel right after conv1, which would
  // cancel a conv bias exactly, so it goes without one.
  b.b1 = cfg.norm == LpaNorm::kBn ? nullptr
                                  : &reg.create(prefix + ".conv1.b", Array::zeros({1, width}));
  b.w2 = &reg.create(prefix + ".conv2.w", Array::zeros({cfg.k2, width, width}));
  b.b2 = &reg.create(prefix + ".conv2.b", Array::zeros({1, width}));
  return b;
}

ad::Var LpaBlock::normalize(ad::Tape& t, ad::Var x, ad::Var cond, const AdaLn& n) const {
  switch (cfg.norm) {
    case LpaNorm::kAdaln:
      return n.apply(t, x, cond);
    case LpaNorm::kLn:
      return ad::layer_norm_rows(x);
    default:
      // Per-channel normalization using the statistics of this sequence.
      return ad::transpose(ad::layer_norm_rows(ad::transpose(x)));
  }
}

ad::Var LpaBlock::forward(ad::Tape& t, ad::Var x, ad::Var cond) const {
  const Array& xv = x.val();
  check_rank2(xv, "lpa input");
  if (xv.cols() != width) {
    throw DimensionError("lpa: input " + shape_to_string(xv.shape) +
                         " does not match block width [" + std::to_string(width) + "]");
  }
  ad::Var bias1 = b1 ? t.param(*b1) : t.leaf(Array::zeros({1, width}));
  ad::Var h = ad::conv1d(normalize(t, x, cond, norm1), t.param(*w1), bias1);
  ad::Var y = ad::conv1d(normalize(t, h, cond, norm2), t.param(*w2), t.param(*b2));
  return ad::add(x, y);
}

FuseLinear FuseLinear::create(ParamRegistry& reg, const std::string& prefix, int64_t width) {
  FuseLinear f;
  f.width = width;
  Array w = Array::zeros({2 * width, width});
  for (int64_t i = 0; i < width; ++i) {
    w.at(i, i) = 0.25;
    w.at(width + i, i) = 0.5;
  }
  f.w = &reg.create(prefix + ".w", std::move(w));
  f.b = &reg.create(prefix + ".b", Array::zeros({1, width}));
  return f;
}

ad::Var FuseLinear::forward(ad::Tape& t, ad::Var y_global, ad::Var y_local) const {
  check_same_shape(y_global.val(), y_local.val(), "fuse");
  return ad::linear(ad::concat_cols(y_global, y_local), t.param(*w), t.param(*b));
}

}  // namespace timotion
