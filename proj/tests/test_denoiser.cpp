// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "test_helpers.hpp"
#include "timotion/denoiser.hpp"
#include "timotion/losses.hpp"

using namespace timotion;
using tt::message_mentions;
using tt::random_normal;
using tt::randomize_params;
using tt::weighted_sum;

namespace {

std::string temp_path(const std::string& name) { return "/tmp/timotion_test_" + name; }

void patch_file(const std::string& path, uint64_t offset, const void* bytes, size_t n) {
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  REQUIRE(f.good());
  f.seekp(static_cast<std::streamoff>(offset));
  f.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
}

void truncate_file(const std::string& path, uint64_t keep) {
  std::ifstream in(path, std::ios::binary);
  std::vector<char> buf(keep);
  in.read(buf.data(), static_cast<std::streamsize>(keep));
  REQUIRE(static_cast<uint64_t>(in.gcount()) == keep);
  in.close();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(buf.data(), static_cast<std::streamsize>(keep));
}

// Small model that still exercises every code path.
DenoiserConfig tiny_config(ModelVariant variant, MixingBackend backend) {
  DenoiserConfig cfg;
  cfg.embed_width = 8;
  cfg.blocks = 1;
  cfg.joints = 2;  // frame width 28
  cfg.max_len = 8;
  cfg.vocab = 16;
  cfg.variant = variant;
  cfg.mixing.backend = backend;
  cfg.mixing.heads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("timestep sinusoid layout") {
  Array z = timestep_sinusoid(0, 8);
  for (int64_t i = 0; i < 4; ++i) {
    CHECK(z.data[static_cast<size_t>(2 * i)] == 0.0);
    CHECK(z.data[static_cast<size_t>(2 * i + 1)] == 1.0);
  }
  Array big = timestep_sinusoid(1000, 64);
  CHECK(big.all_finite());
  // Lowest frequency is 1, so entry 0 is sin(t) itself.
  CHECK(timestep_sinusoid(3, 8).data[0] == doctest::Approx(std::sin(3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(timestep_sinusoid(-1, 8), UsageError);
  CHECK_THROWS_AS(timestep_sinusoid(0, 7), ConfigError);
}

TEST_CASE("condition embedding") {
  Denoiser model = Denoiser::create(tiny_config(ModelVariant::kFull, MixingBackend::kAttention), 5);
  std::vector<uint32_t> tokens = {1, 3, 7};

  SUBCASE("null condition zeroes the text part exactly") {
    ad::Tape t;
    ConditionEmbedding c = model.embed_condition(t, 10, tokens, true);
    for (double v : c.text.val().data) CHECK(v == 0.0);
    CHECK(c.null_cond);
    CHECK(max_abs_diff(c.combined.val(), c.timestep.val()) == 0.0);
  }
  SUBCASE("no tokens also means no text") {
    ad::Tape t;
    ConditionEmbedding c = model.embed_condition(t, 10, {}, false);
    for (double v : c.text.val().data) CHECK(v == 0.0);
  }
  SUBCASE("same inputs embed identically across tapes") {
    ad::Tape t1, t2;
    Array e1 = model.embed_condition(t1, 42, tokens, false).combined.val();
    Array e2 = model.embed_condition(t2, 42, tokens, false).combined.val();
    CHECK(max_abs_diff(e1, e2) == 0.0);
  }
  SUBCASE("out-of-vocabulary token is rejected") {
    ad::Tape t;
    CHECK_THROWS_AS(model.embed_condition(t, 0, {16}, false), UsageError);
    try {
      model.embed_condition(t, 0, {99}, false);
      FAIL("expected UsageError");
    } catch (const UsageError& e) {
      CHECK(message_mentions(e, "99", "16"));
    }
  }
  SUBCASE("token gradients reach only the used rows") {
    model.reg.zero_grad();
    ad::Tape t;
    ConditionEmbedding c = model.embed_condition(t, 10, {1, 3}, false);
    t.backward(ad::sum(c.combined));
    const Array& g = model.token_emb->grad;
    double used = 0.0, unused = 0.0;
    for (int64_t j = 0; j < g.cols(); ++j) {
      used += std::fabs(g.at(1, j)) + std::fabs(g.at(3, j));
      unused += std::fabs(g.at(0, j)) + std::fabs(g.at(2, j));
    }
    CHECK(used > 0.0);
    CHECK(unused == 0.0);
  }
  SUBCASE("null condition trains no token rows") {
    model.reg.zero_grad();
    ad::Tape t;
    ConditionEmbedding c = model.embed_condition(t, 10, tokens, true);
    t.backward(ad::sum(c.combined));
    for (double v : model.token_emb->grad.data) CHECK(v == 0.0);
  }
}

TEST_CASE("fresh blocks are identity maps, except the doubling role concat") {
  Rng rng(21);
  Array xa = random_normal({5, 8}, rng), xb = random_normal({5, 8}, rng);
  Array xa_wide = random_normal({5, 16}, rng), xb_wide = random_normal({5, 16}, rng);

  auto run_block = [](ModelVariant v, MixingBackend b, const Array& a,
                      const Array& bb) -> std::pair<Array, Array> {
    Denoiser model = Denoiser::create(tiny_config(v, b), 9);
    ad::Tape t;
    ConditionEmbedding c = model.embed_condition(t, 7, {2}, false);
    auto [ya, yb] = model.blocks[0].forward(t, t.leaf(a), t.leaf(bb), c.combined);
    return {ya.val(), yb.val()};
  };

  for (MixingBackend backend : {MixingBackend::kAttention, MixingBackend::kRwkv}) {
    CAPTURE(backend_name(backend));
    auto [fa, fb] = run_block(ModelVariant::kFull, backend, xa, xb);
    CHECK(max_abs_diff(fa, xa) == 0.0);
    CHECK(max_abs_diff(fb, xb) == 0.0);

    auto [ra, rb] = run_block(ModelVariant::kRoleEvolving, backend, xa, xb);
    Array xa2 = xa, xb2 = xb;
    for (double& v : xa2.data) v += v;
    for (double& v : xb2.data) v += v;
    CHECK(max_abs_diff(ra, xa2) == 0.0);
    CHECK(max_abs_diff(rb, xb2) == 0.0);

    auto [ia, ib] = run_block(ModelVariant::kInterleaved, backend, xa_wide, xb_wide);
    CHECK(max_abs_diff(ia, xa_wide) == 0.0);
    CHECK(max_abs_diff(ib, xb_wide) == 0.0);
  }
  auto [sa, sb] = run_block(ModelVariant::kSeparate, MixingBackend::kAttention, xa_wide, xb_wide);
  CHECK(max_abs_diff(sa, xa_wide) == 0.0);
  CHECK(max_abs_diff(sb, xb_wide) == 0.0);
}

TEST_CASE("selector fusion forwards the doubled global branch alone") {
  Denoiser model = Denoiser::create(tiny_config(ModelVariant::kFull, MixingBackend::kAttention), 9);
  ad::Parameter* w = model.blocks[0].fuse.w;
  for (double& v : w->value.data) v = 0.0;
  for (int64_t i = 0; i < 8; ++i) w->value.at(i, i) = 1.0;

  Rng rng(22);
  Array xa = random_normal({5, 8}, rng), xb = random_normal({5, 8}, rng);
  ad::Tape t;
  ConditionEmbedding c = model.embed_condition(t, 7, {2}, false);
  auto [ya, yb] = model.blocks[0].forward(t, t.leaf(xa), t.leaf(xb), c.combined);
  Array xa2 = xa, xb2 = xb;
  for (double& v : xa2.data) v += v;
  for (double& v : xb2.data) v += v;
  CHECK(max_abs_diff(ya.val(), xa2) == 0.0);
  CHECK(max_abs_diff(yb.val(), xb2) == 0.0);
}

TEST_CASE("swapping the input persons changes the outputs") {
  Denoiser model = Denoiser::create(tiny_config(ModelVariant::kFull, MixingBackend::kAttention), 9);
  Rng rng(23);
  randomize_params(model.reg.all(), rng);
  Array xa = random_normal({5, 8}, rng), xb = random_normal({5, 8}, rng);

  ad::Tape t;
  ConditionEmbedding c = model.embed_condition(t, 7, {2}, false);
  auto [ya, yb] = model.blocks[0].forward(t, t.leaf(xa), t.leaf(xb), c.combined);
  auto [sa, sb] = model.blocks[0].forward(t, t.leaf(xb), t.leaf(xa), c.combined);
  CHECK(max_abs_diff(sa.val(), ya.val()) > 1e-6);
  CHECK(max_abs_diff(sa.val(), yb.val()) > 1e-6);
  CHECK(max_abs_diff(sb.val(), yb.val()) > 1e-6);
}

TEST_CASE("full block gradient check") {
  for (MixingBackend backend : {MixingBackend::kAttention, MixingBackend::kRwkv}) {
    CAPTURE(backend_name(backend));
    DenoiserConfig cfg = tiny_config(ModelVariant::kFull, backend);
    cfg.embed_width = 4;
    cfg.max_len = 2;
    cfg.vocab = 4;
    Denoiser model = Denoiser::create(cfg, 31);
    Rng rng(32);
    randomize_params(model.reg.all(), rng, 0.1);

    Array xa = random_normal({2, 4}, rng), xb = random_normal({2, 4}, rng);
    Array cond = random_normal({1, 4}, rng);
    Array wa = random_normal({2, 4}, rng), wb = random_normal({2, 4}, rng);

    SUBCASE("against parameters") {
      auto build = [&](ad::Tape& t) {
        auto [ya, yb] = model.blocks[0].forward(t, t.leaf(xa), t.leaf(xb), t.leaf(cond));
        return ad::add(weighted_sum(ya, wa), weighted_sum(yb, wb));
      };
      CHECK(ad::grad_check_params(build, model.reg.all()) <= 1e-4);
    }
    SUBCASE("against inputs") {
      auto f = [&](ad::Tape& t, const std::vector<ad::Var>& in) {
        auto [ya, yb] = model.blocks[0].forward(t, in[0], in[1], in[2]);
        return ad::add(weighted_sum(ya, wa), weighted_sum(yb, wb));
      };
      CHECK(ad::grad_check(f, {xa, xb, cond}) <= 1e-4);
    }
  }
}

TEST_CASE("zero-initialized output head predicts zero for any input") {
  for (MixingBackend backend : {MixingBackend::kAttention, MixingBackend::kRwkv}) {
    DenoiserConfig cfg = tiny_config(ModelVariant::kFull, backend);
    cfg.blocks = 2;
    Denoiser model = Denoiser::create(cfg, 77);
    Rng rng(78);
    Array xa = random_normal({6, 28}, rng, 3.0), xb = random_normal({6, 28}, rng, 3.0);
    auto [ya, yb] = model.predict(xa, xb, 500, {4, 5}, false);
    for (double v : ya.data) CHECK(v == 0.0);
    for (double v : yb.data) CHECK(v == 0.0);
  }
}

TEST_CASE("forward preserves the frame shape") {
  DenoiserConfig cfg = tiny_config(ModelVariant::kFull, MixingBackend::kAttention);
  cfg.joints = 22;
  cfg.max_len = 4;
  Denoiser model = Denoiser::create(cfg, 1);
  CHECK(cfg.frame_width() == 268);
  Rng rng(2);
  Array xa = random_normal({4, 268}, rng), xb = random_normal({4, 268}, rng);
  auto [ya, yb] = model.predict(xa, xb, 3, {}, true);
  CHECK(ya.shape == Shape{4, 268});
  CHECK(yb.shape == Shape{4, 268});
}

TEST_CASE("denoiser input validation") {
  Denoiser model = Denoiser::create(tiny_config(ModelVariant::kFull, MixingBackend::kAttention), 1);
  Rng rng(3);
  ad::Tape t;
  ConditionEmbedding c = model.embed_condition(t, 0, {}, true);
  Array good = random_normal({4, 28}, rng);
  Array narrow = random_normal({4, 27}, rng);
  Array too_long = random_normal({9, 28}, rng);
  CHECK_THROWS_AS(model.forward(t, t.leaf(good), t.leaf(narrow), c), DimensionError);
  CHECK_THROWS_AS(model.forward(t, t.leaf(too_long), t.leaf(too_long), c), DimensionError);
}

TEST_CASE("one gradient step lowers one example's loss") {
  DenoiserConfig cfg = tiny_config(ModelVariant::kFull, MixingBackend::kAttention);
  cfg.joints = 5;
  Denoiser model = Denoiser::create(cfg, 4);
  MotionPair pair = generate_synthetic_pair(desk_skeleton(), Scenario::kApproachHandshake, 8, 11);
  Rng rng(5);
  Array xa = random_normal({8, 64}, rng), xb = random_normal({8, 64}, rng);

  auto loss_value = [&](bool apply_grads) {
    model.reg.zero_grad();
    ad::Tape t;
    ConditionEmbedding c = model.embed_condition(t, 100, pair.tokens, false);
    auto [ya, yb] = model.forward(t, t.leaf(xa), t.leaf(xb), c);
    ad::Var loss = l_simple(ya, yb, t.leaf(pair.a), t.leaf(pair.b), 8);
    if (apply_grads) {
      t.backward(loss);
      for (ad::Parameter* p : model.reg.all()) {
        for (size_t i = 0; i < p->value.data.size(); ++i) {
          p->value.data[i] -= 1e-3 * p->grad.data[i];
        }
      }
    }
    return loss.val().data[0];
  };

  double before = loss_value(true);
  double after = loss_value(false);
  CHECK(before > 0.0);
  CHECK(after < before);
}

TEST_CASE("same config and seed build the same model") {
  DenoiserConfig cfg = tiny_config(ModelVariant::kFull, MixingBackend::kRwkv);
  Denoiser m1 = Denoiser::create(cfg, 123);
  Denoiser m2 = Denoiser::create(cfg, 123);
  Denoiser m3 = Denoiser::create(cfg, 124);
  std::vector<ad::Parameter*> p1 = m1.reg.all(), p2 = m2.reg.all(), p3 = m3.reg.all();
  REQUIRE(p1.size() == p2.size());
  double twin_diff = 0.0, other_diff = 0.0;
  for (size_t i = 0; i < p1.size(); ++i) {
    twin_diff = std::max(twin_diff, max_abs_diff(p1[i]->value, p2[i]->value));
    other_diff = std::max(other_diff, max_abs_diff(p1[i]->value, p3[i]->value));
  }
  CHECK(twin_diff == 0.0);
  CHECK(other_diff > 0.0);

  Rng rng(6);
  Array xa = random_normal({5, 28}, rng), xb = random_normal({5, 28}, rng);
  auto [y1a, y1b] = m1.predict(xa, xb, 9, {1}, false);
  auto [y2a, y2b] = m2.predict(xa, xb, 9, {1}, false);
  CHECK(max_abs_diff(y1a, y2a) == 0.0);
  CHECK(max_abs_diff(y1b, y2b) == 0.0);
}

TEST_CASE("null and conditioned forwards differ for generic weights") {
  Denoiser model = Denoiser::create(tiny_config(ModelVariant::kFull, MixingBackend::kAttention), 7);
  Rng rng(8);
  randomize_params(model.reg.all(), rng);
  Array xa = random_normal({5, 28}, rng), xb = random_normal({5, 28}, rng);
  auto [ca, cb] = model.predict(xa, xb, 40, {1, 2}, false);
  auto [ua, ub] = model.predict(xa, xb, 40, {1, 2}, true);
  CHECK(max_abs_diff(ca, ua) > 1e-9);
  CHECK(max_abs_diff(cb, ub) > 1e-9);
}

TEST_CASE("parameter counts") {
  DenoiserConfig base = tiny_config(ModelVariant::kFull, MixingBackend::kAttention);
  base.embed_width = 16;
  base.vocab = 8;

  SUBCASE("block count adds a fixed per-block amount") {
    DenoiserConfig c1 = base, c2 = base, c3 = base;
    c1.blocks = 1;
    c2.blocks = 2;
    c3.blocks = 3;
    int64_t d12 = count_parameters(c2) - count_parameters(c1);
    int64_t d23 = count_parameters(c3) - count_parameters(c2);
    CHECK(d12 == d23);
    CHECK(d12 > 0);
  }
  SUBCASE("zero blocks leaves projections and embeddings only") {
    DenoiserConfig c = base;
    c.blocks = 0;
    int64_t cw = c.embed_width, f = c.frame_width(), p = c.person_width();
    int64_t want = c.vocab * cw + cw * cw + cw + f * p + p + p * f + f;
    CHECK(count_parameters(c) == want);
  }
  SUBCASE("variant ordering at equal width and depth") {
    DenoiserConfig sep = base, inter = base, roles = base, full = base;
    sep.variant = ModelVariant::kSeparate;
    inter.variant = ModelVariant::kInterleaved;
    roles.variant = ModelVariant::kRoleEvolving;
    full.variant = ModelVariant::kFull;
    int64_t n_sep = count_parameters(sep);
    int64_t n_inter = count_parameters(inter);
    int64_t n_roles = count_parameters(roles);
    int64_t n_full = count_parameters(full);
    CHECK(n_sep > n_inter);
    CHECK(n_inter > n_roles);
    CHECK(n_full > n_roles);
    CHECK(n_full < n_sep);
  }
}

TEST_CASE("config validation") {
  DenoiserConfig cfg = tiny_config(ModelVariant::kFull, MixingBackend::kAttention);
  cfg.embed_width = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config(ModelVariant::kSeparate, MixingBackend::kRwkv);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config(ModelVariant::kFull, MixingBackend::kAttention);
  cfg.cfg_dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config(ModelVariant::kFull, MixingBackend::kAttention);
  cfg.guidance = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(parse_variant("hybrid"), ConfigError);
  CHECK(parse_variant(variant_name(ModelVariant::kRoleEvolving)) == ModelVariant::kRoleEvolving);
}

TEST_CASE("checkpoint round trip") {
  std::string path = temp_path("checkpoint.timc");
  DenoiserConfig cfg = tiny_config(ModelVariant::kFull, MixingBackend::kRwkv);
  Denoiser model = Denoiser::create(cfg, 55);
  Rng rng(56);
  randomize_params(model.reg.all(), rng);
  save_checkpoint(path, model, 1234);

  SUBCASE("everything survives") {
    int64_t step = 0;
    Denoiser back = load_checkpoint(path, &step);
    CHECK(step == 1234);
    CHECK(back.cfg.embed_width == cfg.embed_width);
    CHECK(back.cfg.variant == cfg.variant);
    CHECK(back.cfg.mixing.backend == cfg.mixing.backend);
    CHECK(back.cfg.cfg_dropout == cfg.cfg_dropout);
    CHECK(back.cfg.guidance == cfg.guidance);
    std::vector<ad::Parameter*> pa = model.reg.all(), pb = back.reg.all();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i]->name == pb[i]->name);
      CHECK(max_abs_diff(pa[i]->value, pb[i]->value) == 0.0);
    }
    Array xa = random_normal({5, 28}, rng), xb = random_normal({5, 28}, rng);
    auto [y1a, y1b] = model.predict(xa, xb, 9, {1}, false);
    auto [y2a, y2b] = back.predict(xa, xb, 9, {1}, false);
    CHECK(max_abs_diff(y1a, y2a) == 0.0);
    CHECK(max_abs_diff(y1b, y2b) == 0.0);
  }
  SUBCASE("bad magic is rejected at offset zero") {
    patch_file(path, 0, "XIMC", 4);
    try {
      load_checkpoint(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(message_mentions(e, "magic", "offset 0"));
    }
  }
  SUBCASE("truncation names the missing field") {
    truncate_file(path, 100);
    try {
      load_checkpoint(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(message_mentions(e, "truncated", "offset"));
    }
  }
  SUBCASE("tampered parameter name is rejected") {
    // First name starts right after the fixed header and the parameter count.
    patch_file(path, 136, "X", 1);
    try {
      load_checkpoint(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(message_mentions(e, "token_emb", "Xoken_emb"));
    }
  }
  std::remove(path.c_str());
}
