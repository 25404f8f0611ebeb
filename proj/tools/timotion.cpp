// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: dataset generation, training, sampling, motion
// in-betweening, and the analysis reports. Every command is deterministic
// given its flags; all randomness flows from one 64-bit seed (flag, else the
// TIMOTION_SEED environment variable, else 42).
//
// Exit codes: 0 success, 1 failed check, 2 usage error, 3 I/O or format error.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "timotion/analysis.hpp"
#include "timotion/denoiser.hpp"
#include "timotion/diffusion.hpp"
#include "timotion/errors.hpp"
#include "timotion/losses.hpp"
#include "timotion/mixing.hpp"
#include "timotion/motion.hpp"
#include "timotion/params.hpp"
#include "timotion/rng.hpp"
#include "timotion/tape.hpp"
#include "timotion/training.hpp"

using namespace timotion;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

long long ll(int64_t v) { return static_cast<long long>(v); }

Array random_uniform(Shape shape, Rng& rng) {
  Array a(std::move(shape));
  for (double& v : a.data) v = rng.uniform(-1.0, 1.0);
  return a;
}

void scatter_params(const std::vector<ad::Parameter*>& params, Rng& rng, double scale = 0.1) {
  for (ad::Parameter* p : params) {
    for (double& v : p->value.data) v = scale * rng.normal();
  }
}

// Scalarizes a matrix output against fixed random weights so a finite
// difference check exercises the whole Jacobian.
ad::Var weighted(ad::Tape& t, ad::Var v, const Array& w) {
  return ad::sum(ad::mul(v, t.leaf(w)));
}

void write_sidecar(const std::string& path, const nlohmann::json& j) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  std::string text = j.dump(2);
  text += "\n";
  size_t written = std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
  if (written != text.size()) throw FormatError("failed to write '" + path + "'");
}

Array head_rows(const Array& a, int64_t n) {
  Array out({n, a.cols()});
  std::copy(a.data.begin(), a.data.begin() + n * a.cols(), out.data.begin());
  return out;
}

std::string trimmed(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Turns a flat key=value file into --key=value tokens, skipping keys already
// given on the command line so explicit flags win. CLI11 only reads config
// files attached to the top-level command, so subcommand settings are
// expanded by hand before parsing.
std::vector<std::string> load_config_tokens(const std::string& path,
                                            const std::vector<std::string>& given) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw FormatError("cannot open config file '" + path + "'");
  std::string text;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
  std::fclose(f);

  std::set<std::string> explicit_keys;
  for (const std::string& arg : given) {
    if (arg.rfind("--", 0) != 0) continue;
    size_t eq = arg.find('=');
    explicit_keys.insert(arg.substr(2, eq == std::string::npos ? eq : eq - 2));
  }

  std::vector<std::string> tokens;
  size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = trimmed(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                       line + "'");
    }
    std::string key = trimmed(line.substr(0, eq));
    std::string value = trimmed(line.substr(eq + 1));
    if (key.empty()) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": empty key");
    }
    if (key == "config") {
      throw UsageError(path + ":" + std::to_string(lineno) +
                       ": config files cannot chain other config files");
    }
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (explicit_keys.count(key)) continue;
    tokens.push_back("--" + key + "=" + value);
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataOpts {
  std::string scenario = "mixed";
  int64_t count = 200;
  int64_t length = 32;
  int64_t joints = 5;
  uint64_t seed = 42;
  std::string out;
};

int run_gen_data(const GenDataOpts& o) {
  std::vector<Scenario> cycle = o.scenario == "mixed"
                                    ? all_scenarios()
                                    : std::vector<Scenario>{parse_scenario(o.scenario)};
  SkeletonSpec spec = desk_skeleton(o.joints);
  Dataset ds;
  ds.joint_count = o.joints;
  Rng stream = Rng(o.seed).split("gen-data");
  for (int64_t i = 0; i < o.count; ++i) {
    Scenario sc = cycle[static_cast<size_t>(i) % cycle.size()];
    uint64_t pair_seed = stream.split(static_cast<uint64_t>(i)).key();
    ds.pairs.push_back(generate_synthetic_pair(spec, sc, o.length, pair_seed));
  }
  save_dataset(o.out, ds);
  std::vector<std::string> names;
  names.reserve(cycle.size());
  for (Scenario sc : cycle) names.push_back(scenario_name(sc));
  write_manifest(o.out + ".manifest.json", ds, names, o.seed);
  std::printf("wrote %lld pairs (length %lld, %lld joints) to %s\n", ll(o.count), ll(o.length),
              ll(o.joints), o.out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string data, out, csv;
  int64_t steps = 2000, batch = 4, warmup = 100, window = 50, log_every = 100;
  double lr = 1e-4, weight_decay = 2e-5, dropout = 0.10;
  int64_t width = 64, blocks = 2, heads = 4, layers = 1, ff_mult = 4;
  int64_t vocab = 64, max_len = 0, timesteps = 1000;
  std::string backend = "attention", variant = "full";
  uint64_t seed = 42;
};

int run_train(const TrainOpts& o) {
  Dataset ds = load_dataset(o.data);
  if (ds.pairs.empty()) throw UsageError("dataset '" + o.data + "' has no pairs to train on");

  int64_t longest = 1;
  for (const MotionPair& p : ds.pairs) {
    longest = std::max(longest, static_cast<int64_t>(p.valid_len));
  }

  DenoiserConfig cfg;
  cfg.embed_width = o.width;
  cfg.blocks = o.blocks;
  cfg.joints = ds.joint_count;
  cfg.max_len = o.max_len > 0 ? o.max_len : longest;
  cfg.vocab = o.vocab;
  cfg.cfg_dropout = o.dropout;
  cfg.variant = parse_variant(o.variant);
  cfg.mixing.backend = parse_backend(o.backend);
  cfg.mixing.heads = o.heads;
  cfg.mixing.layers = o.layers;
  cfg.mixing.ff_mult = o.ff_mult;

  Denoiser model = Denoiser::create(cfg, o.seed);
  NoiseSchedule sched = cosine_schedule(o.timesteps);

  TrainConfig tc;
  tc.steps = o.steps;
  tc.batch = o.batch;
  // Capped so short runs (including --steps 0) stay valid.
  tc.warmup = std::min(o.warmup, o.steps);
  tc.seed = o.seed;
  tc.smooth_window = o.window;
  tc.optim.lr = o.lr;
  tc.optim.weight_decay = o.weight_decay;

  StepCallback progress = [&](const StepRecord& r) {
    if (o.log_every > 0 && (r.step % o.log_every == 0 || r.step == o.steps)) {
      std::printf("step %6lld  lr %.3e  total %.6f  simple %.6f\n", ll(r.step), r.lr, r.total,
                  r.simple);
    }
  };
  TrainResult res = train(model, sched, ds, tc, progress);

  save_checkpoint(o.out, model, o.steps);
  std::string csv = o.csv.empty() ? o.out + ".losses.csv" : o.csv;
  write_loss_csv(csv, res.history);
  if (o.steps > 0 && res.initial_smoothed > 0.0) {
    std::printf("smoothed total loss %.6f -> %.6f (x%.4f)\n", res.initial_smoothed,
                res.final_smoothed, res.final_smoothed / res.initial_smoothed);
  }
  std::printf("checkpoint %s\nloss curve %s\n", o.out.c_str(), csv.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sample

struct SampleOpts {
  std::string ckpt, out;
  std::vector<uint32_t> tokens{1, 2, 3};
  int64_t length = 32, steps = 50, timesteps = 1000;
  double guidance = 3.5, eta = 0.0;
  uint64_t seed = 42;
};

int run_sample(const SampleOpts& o) {
  Denoiser model = load_checkpoint(o.ckpt);
  NoiseSchedule sched = cosine_schedule(o.timesteps);
  SamplerConfig sc;
  sc.steps = o.steps;
  sc.eta = o.eta;
  sc.guidance = o.guidance;
  sc.seed = o.seed;
  MotionPair mp = sample(model, sched, o.tokens, o.length, sc);
  mp.tokens = o.tokens;

  Dataset out_ds;
  out_ds.joint_count = model.cfg.joints;
  out_ds.pairs.push_back(std::move(mp));
  save_dataset(o.out, out_ds);

  nlohmann::json j;
  j["command"] = "sample";
  j["checkpoint"] = o.ckpt;
  j["tokens"] = o.tokens;
  j["length"] = o.length;
  j["steps"] = o.steps;
  j["timesteps"] = o.timesteps;
  j["eta"] = o.eta;
  j["guidance"] = o.guidance;
  j["seed"] = o.seed;
  write_sidecar(o.out + ".json", j);
  std::printf("sampled %lld frames -> %s\n", ll(o.length), o.out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// inbetween

struct InbetweenOpts {
  std::string ckpt, data, out;
  int64_t index = 0, steps = 50, timesteps = 1000;
  double alpha = 0.1, guidance = 3.5, eta = 0.0;
  bool independent_noise = false;
  uint64_t seed = 42;
};

int run_inbetween(const InbetweenOpts& o) {
  Denoiser model = load_checkpoint(o.ckpt);
  Dataset ds = load_dataset(o.data);
  if (o.index < 0 || o.index >= static_cast<int64_t>(ds.pairs.size())) {
    throw UsageError("pair index " + std::to_string(o.index) + " outside dataset of " +
                     std::to_string(ds.pairs.size()) + " pairs");
  }
  if (ds.joint_count != model.cfg.joints) {
    throw UsageError("dataset has " + std::to_string(ds.joint_count) +
                     " joints but the checkpoint expects " + std::to_string(model.cfg.joints));
  }
  NoiseSchedule sched = cosine_schedule(o.timesteps);
  SamplerConfig sc;
  sc.steps = o.steps;
  sc.eta = o.eta;
  sc.guidance = o.guidance;
  sc.seed = o.seed;
  sc.shared_noise = !o.independent_noise;
  const MotionPair& gt = ds.pairs[o.index];
  MotionPair mp = inbetween_sample(model, sched, gt, o.alpha, sc);
  mp.tokens = gt.tokens;

  Dataset out_ds;
  out_ds.joint_count = ds.joint_count;
  out_ds.frame_rate = ds.frame_rate;
  out_ds.pairs.push_back(std::move(mp));
  save_dataset(o.out, out_ds);

  nlohmann::json j;
  j["command"] = "inbetween";
  j["checkpoint"] = o.ckpt;
  j["source"] = o.data;
  j["index"] = o.index;
  j["alpha"] = o.alpha;
  j["steps"] = o.steps;
  j["timesteps"] = o.timesteps;
  j["eta"] = o.eta;
  j["guidance"] = o.guidance;
  j["seed"] = o.seed;
  j["shared_noise"] = sc.shared_noise;
  write_sidecar(o.out + ".json", j);
  std::printf("in-betweened pair %lld (fixed ratio %.3f) -> %s\n", ll(o.index), o.alpha,
              o.out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckOpts {
  std::string only;
  double eps = 1e-5;
  uint64_t seed = 42;
  bool list = false;
};

double check_mixing_stack(MixingBackend backend, uint64_t seed, double eps) {
  Rng rng(seed);
  MixingConfig cfg;
  cfg.backend = backend;
  cfg.width = 6;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.ff_mult = 2;
  cfg.cond_width = 3;
  ParamRegistry reg;
  MixingStack stack = MixingStack::create(reg, "blk", cfg, rng);
  scatter_params(reg.all(), rng);
  Array x = random_uniform({4, 6}, rng);
  Array cond = random_uniform({1, 3}, rng);
  Array w = random_uniform({4, 6}, rng);

  auto build = [&](ad::Tape& t) { return weighted(t, stack.forward(t, t.leaf(x), t.leaf(cond)), w); };
  double worst = ad::grad_check_params(build, reg.all(), eps);
  auto f = [&](ad::Tape& t, const std::vector<ad::Var>& in) {
    return weighted(t, stack.forward(t, in[0], t.leaf(cond)), w);
  };
  return std::max(worst, ad::grad_check(f, {x}, eps));
}

double check_lpa_block(uint64_t seed, double eps) {
  Rng rng(seed);
  LpaConfig cfg;
  ParamRegistry reg;
  LpaBlock blk = LpaBlock::create(reg, "lpa", cfg, 4, 2, rng);
  scatter_params(reg.all(), rng);
  Array x = random_uniform({5, 4}, rng);
  Array cond = random_uniform({1, 2}, rng);
  Array w = random_uniform({5, 4}, rng);

  auto build = [&](ad::Tape& t) { return weighted(t, blk.forward(t, t.leaf(x), t.leaf(cond)), w); };
  double worst = ad::grad_check_params(build, reg.all(), eps);
  auto f = [&](ad::Tape& t, const std::vector<ad::Var>& in) {
    return weighted(t, blk.forward(t, in[0], in[1]), w);
  };
  return std::max(worst, ad::grad_check(f, {x, cond}, eps));
}

double check_losses(uint64_t seed, double eps) {
  Rng rng(seed);
  SkeletonSpec spec = desk_skeleton();
  MotionPair p = generate_synthetic_pair(spec, Scenario::kApproachHandshake, 8, 19);
  Array na = p.a, nb = p.b;
  for (double& v : na.data) v += 0.1 * rng.normal();
  for (double& v : nb.data) v += 0.1 * rng.normal();
  LossWeights w;
  auto f = [&](ad::Tape& t, const std::vector<ad::Var>& in) {
    return total_loss(t, in[0], in[1], p.a, p.b, spec, w, 8).total;
  };
  return ad::grad_check(f, {na, nb}, eps);
}

double check_full_block(uint64_t seed, double eps) {
  double worst = 0.0;
  for (MixingBackend backend : {MixingBackend::kAttention, MixingBackend::kRwkv}) {
    DenoiserConfig cfg;
    cfg.embed_width = 4;
    cfg.blocks = 1;
    cfg.joints = 2;
    cfg.max_len = 2;
    cfg.vocab = 4;
    cfg.variant = ModelVariant::kFull;
    cfg.mixing.backend = backend;
    cfg.mixing.heads = 2;
    cfg.mixing.layers = 1;
    cfg.mixing.ff_mult = 2;
    Denoiser model = Denoiser::create(cfg, seed);
    Rng rng(seed + 1);
    scatter_params(model.reg.all(), rng);
    Array xa = random_uniform({2, 4}, rng), xb = random_uniform({2, 4}, rng);
    Array cond = random_uniform({1, 4}, rng);
    Array wa = random_uniform({2, 4}, rng), wb = random_uniform({2, 4}, rng);

    auto build = [&](ad::Tape& t) {
      auto [ya, yb] = model.blocks[0].forward(t, t.leaf(xa), t.leaf(xb), t.leaf(cond));
      return ad::add(weighted(t, ya, wa), weighted(t, yb, wb));
    };
    worst = std::max(worst, ad::grad_check_params(build, model.reg.all(), eps));
    auto f = [&](ad::Tape& t, const std::vector<ad::Var>& in) {
      auto [ya, yb] = model.blocks[0].forward(t, in[0], in[1], in[2]);
      return ad::add(weighted(t, ya, wa), weighted(t, yb, wb));
    };
    worst = std::max(worst, ad::grad_check(f, {xa, xb, cond}, eps));
  }
  return worst;
}

struct BlockCheck {
  const char* name;
  double tolerance;
  std::function<double(uint64_t, double)> worst_error;
};

std::vector<BlockCheck> gradcheck_registry() {
  return {
      {"attention", 1e-4,
       [](uint64_t s, double e) { return check_mixing_stack(MixingBackend::kAttention, s, e); }},
      {"rwkv", 1e-4,
       [](uint64_t s, double e) { return check_mixing_stack(MixingBackend::kRwkv, s, e); }},
      {"lpa", 1e-4, check_lpa_block},
      {"losses", 1e-4, check_losses},
      {"block", 1e-4, check_full_block},
  };
}

int run_gradcheck(const GradcheckOpts& o) {
  std::vector<BlockCheck> checks = gradcheck_registry();
  if (o.list) {
    for (const BlockCheck& c : checks) std::printf("%s\n", c.name);
    return kExitOk;
  }
  if (!o.only.empty()) {
    auto it = std::find_if(checks.begin(), checks.end(),
                           [&](const BlockCheck& c) { return o.only == c.name; });
    if (it == checks.end()) {
      throw UsageError("unknown check '" + o.only +
                       "' (have attention, rwkv, lpa, losses, block)");
    }
    checks = {*it};
  }
  bool failed = false;
  for (const BlockCheck& c : checks) {
    double err = c.worst_error(o.seed, o.eps);
    bool ok = err <= c.tolerance;
    failed |= !ok;
    std::printf("%-9s  max rel err %.3e  tolerance %.0e  %s\n", c.name, err, c.tolerance,
                ok ? "ok" : "FAIL");
  }
  return failed ? kExitCheckFailed : kExitOk;
}

// ---------------------------------------------------------------------------
// gradnorm

struct GradnormOpts {
  int64_t trials = 500, length = 8, dim = 16;
  uint64_t seed = 42;
  bool ortho = false;
  double min_fraction = 0.0;
  std::string csv;
};

int run_gradnorm(const GradnormOpts& o) {
  GradNormConfig cfg;
  cfg.length = o.length;
  cfg.dim = o.dim;
  cfg.trials = o.trials;
  cfg.seed = o.seed;
  cfg.orthonormal_inputs = o.ortho;
  GradNormReport rep = gradient_norm_experiment(cfg);
  if (!o.csv.empty()) write_gradnorm_csv(o.csv, rep);
  std::printf("interleaved gradient larger in %.1f%% of %lld trials (mean ratio %.3f%s)\n",
              100.0 * rep.fraction_interleaved_larger, ll(static_cast<int64_t>(rep.trials.size())),
              rep.mean_ratio, o.ortho ? ", orthonormal inputs" : "");
  if (rep.fraction_interleaved_larger < o.min_fraction) {
    std::fprintf(stderr, "fraction %.3f is below the required %.3f\n",
                 rep.fraction_interleaved_larger, o.min_fraction);
    return kExitCheckFailed;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// spectrum

struct SpectrumOpts {
  std::string data, csv;
  double cutoff = 0.5;
  int64_t index = -1;
};

int run_spectrum(const SpectrumOpts& o) {
  Dataset ds = load_dataset(o.data);
  if (ds.pairs.empty()) throw UsageError("dataset '" + o.data + "' is empty");
  int64_t lo = 0, hi = static_cast<int64_t>(ds.pairs.size());
  if (o.index >= 0) {
    if (o.index >= hi) {
      throw UsageError("pair index " + std::to_string(o.index) + " outside dataset of " +
                       std::to_string(hi) + " pairs");
    }
    lo = o.index;
    hi = o.index + 1;
  }
  double sum = 0.0;
  int64_t n = 0;
  SpectrumReport first;
  for (int64_t i = lo; i < hi; ++i) {
    for (const Array* seq : {&ds.pairs[i].a, &ds.pairs[i].b}) {
      int64_t rows = static_cast<int64_t>(ds.pairs[i].valid_len);
      SpectrumReport r =
          spectrum_analysis(rows < seq->rows() ? head_rows(*seq, rows) : *seq, o.cutoff);
      sum += r.high_freq_proportion;
      if (n == 0) first = std::move(r);
      ++n;
    }
  }
  if (!o.csv.empty()) write_spectrum_csv(o.csv, first);
  std::printf("mean high-frequency proportion %.4f over %lld sequences (cutoff %.2f)\n", sum / n,
              ll(n), o.cutoff);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// params

struct ParamsOpts {
  int64_t width = 64, blocks = 2, joints = 5, max_len = 32, vocab = 64;
  int64_t heads = 4, layers = 1, ff_mult = 4;
  std::string backend = "rwkv";
};

int run_params(const ParamsOpts& o) {
  DenoiserConfig base;
  base.embed_width = o.width;
  base.blocks = o.blocks;
  base.joints = o.joints;
  base.max_len = o.max_len;
  base.vocab = o.vocab;
  base.mixing.backend = parse_backend(o.backend);
  base.mixing.heads = o.heads;
  base.mixing.layers = o.layers;
  base.mixing.ff_mult = o.ff_mult;
  std::vector<SchemeCount> table = compare_schemes(base);

  std::printf("%-14s %12s\n", "variant", "parameters");
  for (const SchemeCount& s : table) {
    std::printf("%-14s %12lld\n", variant_name(s.variant).c_str(), ll(s.params));
  }
  bool ok = table[0].params > table[1].params && table[1].params > table[2].params &&
            table[3].params > table[2].params;
  std::printf("ordering separate > interleaved > role-evolving < full %s\n",
              ok ? "holds" : "VIOLATED");
  return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-person motion diffusion toolkit"};
  app.name("timotion");
  app.require_subcommand(1);
  std::string config_file;

  GenDataOpts gd;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic two-person dataset");
  gen->add_option("--config", config_file, "flat key=value settings file; explicit flags win");
  gen->add_option("--scenario", gd.scenario,
                  "approach_handshake, circle_around, mirror_dance, push_retreat, or mixed")
      ->capture_default_str();
  gen->add_option("--count", gd.count, "number of motion pairs")->capture_default_str();
  gen->add_option("--length", gd.length, "frames per clip")->capture_default_str();
  gen->add_option("--joints", gd.joints, "skeleton joint count")->capture_default_str();
  gen->add_option("--seed", gd.seed, "rng seed")->envname("TIMOTION_SEED")->capture_default_str();
  gen->add_option("--out", gd.out, "output dataset path")->required();

  TrainOpts tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train a denoiser on a dataset");
  train_cmd->add_option("--config", config_file, "flat key=value settings file; explicit flags win");
  train_cmd->add_option("--data", tr.data, "training dataset")->required();
  train_cmd->add_option("--out", tr.out, "checkpoint path")->required();
  train_cmd->add_option("--csv", tr.csv, "loss curve path (default: <out>.losses.csv)");
  train_cmd->add_option("--steps", tr.steps, "optimizer steps")->capture_default_str();
  train_cmd->add_option("--batch", tr.batch, "examples per step")->capture_default_str();
  train_cmd->add_option("--warmup", tr.warmup, "linear warm-up steps")->capture_default_str();
  train_cmd->add_option("--window", tr.window, "loss smoothing window")->capture_default_str();
  train_cmd->add_option("--log-every", tr.log_every, "progress print interval, 0 silences")
      ->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "peak learning rate")->capture_default_str();
  train_cmd->add_option("--weight-decay", tr.weight_decay, "decoupled weight decay")
      ->capture_default_str();
  train_cmd->add_option("--dropout", tr.dropout, "condition dropout rate")->capture_default_str();
  train_cmd->add_option("--width", tr.width, "per-person embedding width")->capture_default_str();
  train_cmd->add_option("--blocks", tr.blocks, "denoiser blocks")->capture_default_str();
  train_cmd->add_option("--heads", tr.heads, "attention heads")->capture_default_str();
  train_cmd->add_option("--layers", tr.layers, "mixing layers per block")->capture_default_str();
  train_cmd->add_option("--ff-mult", tr.ff_mult, "feed-forward expansion")->capture_default_str();
  train_cmd->add_option("--vocab", tr.vocab, "token vocabulary size")->capture_default_str();
  train_cmd->add_option("--max-len", tr.max_len, "position table length, 0 = longest clip")
      ->capture_default_str();
  train_cmd->add_option("--timesteps", tr.timesteps, "diffusion steps T")->capture_default_str();
  train_cmd->add_option("--backend", tr.backend, "attention or rwkv")->capture_default_str();
  train_cmd->add_option("--variant", tr.variant, "separate, interleaved, role-evolving, or full")
      ->capture_default_str();
  train_cmd->add_option("--seed", tr.seed, "rng seed")
      ->envname("TIMOTION_SEED")
      ->capture_default_str();

  SampleOpts sm;
  CLI::App* sample_cmd = app.add_subcommand("sample", "sample a motion pair from a checkpoint");
  sample_cmd->add_option("--config", config_file, "flat key=value settings file; explicit flags win");
  sample_cmd->add_option("--ckpt", sm.ckpt, "checkpoint path")->required();
  sample_cmd->add_option("--out", sm.out, "output motion path")->required();
  sample_cmd->add_option("--tokens", sm.tokens, "condition token ids")
      ->delimiter(',')
      ->capture_default_str();
  sample_cmd->add_option("--length", sm.length, "frames to generate")->capture_default_str();
  sample_cmd->add_option("--steps", sm.steps, "sampling steps")->capture_default_str();
  sample_cmd->add_option("--timesteps", sm.timesteps, "diffusion steps T")->capture_default_str();
  sample_cmd->add_option("--guidance", sm.guidance, "guidance weight w")->capture_default_str();
  sample_cmd->add_option("--eta", sm.eta, "ddim eta, 0 = deterministic")->capture_default_str();
  sample_cmd->add_option("--seed", sm.seed, "rng seed")
      ->envname("TIMOTION_SEED")
      ->capture_default_str();

  InbetweenOpts ib;
  CLI::App* inb = app.add_subcommand("inbetween", "regenerate a clip between fixed end frames");
  inb->add_option("--config", config_file, "flat key=value settings file; explicit flags win");
  inb->add_option("--ckpt", ib.ckpt, "checkpoint path")->required();
  inb->add_option("--data", ib.data, "dataset with the conditioning clip")->required();
  inb->add_option("--out", ib.out, "output motion path")->required();
  inb->add_option("--index", ib.index, "pair index in the dataset")->capture_default_str();
  inb->add_option("--alpha", ib.alpha, "fixed prefix/suffix ratio")->capture_default_str();
  inb->add_option("--steps", ib.steps, "sampling steps")->capture_default_str();
  inb->add_option("--timesteps", ib.timesteps, "diffusion steps T")->capture_default_str();
  inb->add_option("--guidance", ib.guidance, "guidance weight w")->capture_default_str();
  inb->add_option("--eta", ib.eta, "ddim eta")->capture_default_str();
  inb->add_flag("--independent-noise", ib.independent_noise,
                "renoise each person with its own draw");
  inb->add_option("--seed", ib.seed, "rng seed")->envname("TIMOTION_SEED")->capture_default_str();

  GradcheckOpts gc;
  CLI::App* gck = app.add_subcommand("gradcheck", "finite-difference checks on all blocks");
  gck->add_option("--config", config_file, "flat key=value settings file; explicit flags win");
  gck->add_option("--only", gc.only, "run a single named check");
  gck->add_option("--eps", gc.eps, "finite-difference step")->capture_default_str();
  gck->add_flag("--list", gc.list, "print check names and exit");
  gck->add_option("--seed", gc.seed, "rng seed")->envname("TIMOTION_SEED")->capture_default_str();

  GradnormOpts gn;
  CLI::App* gnm = app.add_subcommand("gradnorm", "paired gradient-norm experiment");
  gnm->add_option("--config", config_file, "flat key=value settings file; explicit flags win");
  gnm->add_option("--trials", gn.trials, "paired trials")->capture_default_str();
  gnm->add_option("--length", gn.length, "frames per person")->capture_default_str();
  gnm->add_option("--dim", gn.dim, "feature width")->capture_default_str();
  gnm->add_flag("--ortho", gn.ortho, "orthonormalize the inputs first");
  gnm->add_option("--min-fraction", gn.min_fraction,
                  "fail (exit 1) when the winning fraction is below this")
      ->capture_default_str();
  gnm->add_option("--csv", gn.csv, "write per-trial norms here");
  gnm->add_option("--seed", gn.seed, "rng seed")->envname("TIMOTION_SEED")->capture_default_str();

  SpectrumOpts sp;
  CLI::App* spc = app.add_subcommand("spectrum", "frequency content of motion features");
  spc->add_option("--config", config_file, "flat key=value settings file; explicit flags win");
  spc->add_option("--data", sp.data, "motion dataset")->required();
  spc->add_option("--cutoff", sp.cutoff, "high-frequency cutoff fraction")->capture_default_str();
  spc->add_option("--index", sp.index, "analyze one pair instead of all")->capture_default_str();
  spc->add_option("--csv", sp.csv, "write the first sequence's spectrum here");

  ParamsOpts pr;
  CLI::App* prm = app.add_subcommand("params", "parameter counts of the four model variants");
  prm->add_option("--config", config_file, "flat key=value settings file; explicit flags win");
  prm->add_option("--width", pr.width, "per-person embedding width")->capture_default_str();
  prm->add_option("--blocks", pr.blocks, "denoiser blocks")->capture_default_str();
  prm->add_option("--joints", pr.joints, "skeleton joint count")->capture_default_str();
  prm->add_option("--max-len", pr.max_len, "position table length")->capture_default_str();
  prm->add_option("--vocab", pr.vocab, "token vocabulary size")->capture_default_str();
  prm->add_option("--heads", pr.heads, "attention heads")->capture_default_str();
  prm->add_option("--layers", pr.layers, "mixing layers per block")->capture_default_str();
  prm->add_option("--ff-mult", pr.ff_mult, "feed-forward expansion")->capture_default_str();
  prm->add_option("--backend", pr.backend, "attention or rwkv")->capture_default_str();

  int rc = kExitOk;
  gen->callback([&] { rc = run_gen_data(gd); });
  train_cmd->callback([&] { rc = run_train(tr); });
  sample_cmd->callback([&] { rc = run_sample(sm); });
  inb->callback([&] { rc = run_inbetween(ib); });
  gck->callback([&] { rc = run_gradcheck(gc); });
  gnm->callback([&] { rc = run_gradnorm(gn); });
  spc->callback([&] { rc = run_spectrum(sp); });
  prm->callback([&] { rc = run_params(pr); });

  try {
    std::vector<std::string> args;
    args.reserve(static_cast<size_t>(argc));
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    std::string cfg_path;
    for (size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) {
        cfg_path = args[i + 1];
      } else if (args[i].rfind("--config=", 0) == 0) {
        cfg_path = args[i].substr(9);
      }
    }
    if (!cfg_path.empty()) {
      for (std::string& tok : load_config_tokens(cfg_path, args)) {
        args.push_back(std::move(tok));
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCheckFailed;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  }
  return rc;
}
