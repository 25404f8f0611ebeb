// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include "timotion/training.hpp"

#include <cmath>
#include <cstdio>
#include <utility>

namespace timotion {

void OptimConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("optimizer: lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("optimizer: betas must lie in [0, 1)");
  if (eps <= 0.0) throw ConfigError("optimizer: eps must be positive");
  if (weight_decay < 0.0) throw ConfigError("optimizer: weight decay must be non-negative");
}

AdamW::AdamW(std::vector<ad::Parameter*> params, OptimConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const ad::Parameter* p : params_) {
    m_.push_back(Array::zeros(p->value.shape));
    v_.push_back(Array::zeros(p->value.shape));
  }
}

void AdamW::step(double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    ad::Parameter& p = *params_[i];
    Array& m = m_[i];
    Array& v = v_[i];
    for (size_t j = 0; j < p.value.data.size(); ++j) {
      double g = p.grad.data[j];
      m.data[j] = cfg_.beta1 * m.data[j] + (1.0 - cfg_.beta1) * g;
      v.data[j] = cfg_.beta2 * v.data[j] + (1.0 - cfg_.beta2) * g * g;
      double m_hat = m.data[j] / bc1;
      double v_hat = v.data[j] / bc2;
      // Decay is decoupled: applied to the weight directly, not via the
      // gradient moments.
      p.value.data[j] -= lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                               cfg_.weight_decay * p.value.data[j]);
      p.grad.data[j] = 0.0;
    }
  }
}

double lr_schedule(int64_t step, int64_t total, int64_t warmup, double peak) {
  if (total <= 0) throw ConfigError("lr_schedule: total steps must be positive");
  if (warmup < 0 || warmup > total) throw ConfigError("lr_schedule: warmup outside [0, total]");
  if (step < 0 || step >= total) throw UsageError("lr_schedule: step outside [0, total)");
  if (step < warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total == warmup) return peak;
  double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return peak * 0.5 * (1.0 + std::cos(M_PI * progress));
}

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("training: steps must be non-negative");
  if (batch < 1) throw ConfigError("training: batch must be at least 1");
  if (warmup < 0 || (steps > 0 && warmup > steps))
    throw ConfigError("training: warmup outside [0, steps]");
  if (smooth_window < 1) throw ConfigError("training: smooth window must be at least 1");
  if (d_max <= 0.0) throw ConfigError("training: d_max must be positive");
  if (weights.vel < 0 || weights.foot < 0 || weights.bone < 0 || weights.dist < 0 ||
      weights.rel_orient < 0)
    throw ConfigError("training: loss weights must be non-negative");
  optim.validate();
}

namespace {

double window_mean(const std::vector<StepRecord>& h, size_t begin, size_t end) {
  double sum = 0.0;
  for (size_t i = begin; i < end; ++i) sum += h[i].total;
  return sum / static_cast<double>(end - begin);
}

}  // namespace

TrainResult train(Denoiser& model, const NoiseSchedule& sched, const Dataset& data,
                  const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (data.pairs.empty()) throw ConfigError("training: dataset is empty");
  if (data.joint_count != model.cfg.joints) {
    throw ConfigError("training: dataset has " + std::to_string(data.joint_count) +
                      " joints but the model expects " + std::to_string(model.cfg.joints));
  }
  int64_t width = model.cfg.frame_width();
  for (const MotionPair& p : data.pairs) {
    if (p.a.cols() != width || p.b.cols() != width)
      throw ConfigError("training: pair frame width does not match the model");
    if (static_cast<int64_t>(p.valid_len) > model.cfg.max_len)
      throw ConfigError("training: pair longer than the model's max length");
  }

  SkeletonSpec skel = desk_skeleton(model.cfg.joints);
  AdamW opt(model.reg.all(), cfg.optim);
  Rng rng = Rng(cfg.seed).split("train");
  double inv_batch = 1.0 / static_cast<double>(cfg.batch);

  TrainResult result;
  result.history.reserve(static_cast<size_t>(cfg.steps));
  for (int64_t step = 0; step < cfg.steps; ++step) {
    StepRecord rec;
    rec.step = step + 1;
    for (int64_t item = 0; item < cfg.batch; ++item) {
      const MotionPair& pair = data.pairs[static_cast<size_t>(
          rng.uniform_int(static_cast<int64_t>(data.pairs.size())))];
      int64_t t = 1 + rng.uniform_int(sched.T);
      bool drop = rng.uniform() < model.cfg.cfg_dropout;
      Array eps_a(pair.a.shape), eps_b(pair.b.shape);
      for (double& v : eps_a.data) v = rng.normal();
      for (double& v : eps_b.data) v = rng.normal();
      Array xt_a = q_sample(sched, pair.a, t, eps_a);
      Array xt_b = q_sample(sched, pair.b, t, eps_b);

      ad::Tape tape;
      ConditionEmbedding cond = model.embed_condition(tape, t, pair.tokens, drop);
      auto [pred_a, pred_b] =
          model.forward(tape, tape.leaf(xt_a), tape.leaf(xt_b), cond);
      LossTerms terms =
          total_loss(tape, pred_a, pred_b, pair.a, pair.b, skel, cfg.weights,
                     static_cast<int64_t>(pair.valid_len), cfg.d_max);
      // Backprop the batch-mean so gradients accumulate to the average.
      tape.backward(ad::scale(terms.total, inv_batch));
      rec.total += terms.total.val().data[0] * inv_batch;
      rec.simple += terms.simple.val().data[0] * inv_batch;
    }
    rec.lr = lr_schedule(step, cfg.steps, cfg.warmup, cfg.optim.lr);
    opt.step(rec.lr);
    result.history.push_back(rec);
    if (on_step) on_step(rec);
  }

  if (!result.history.empty()) {
    size_t n = result.history.size();
    size_t w = std::min(static_cast<size_t>(cfg.smooth_window), n);
    result.initial_smoothed = window_mean(result.history, 0, w);
    result.final_smoothed = window_mean(result.history, n - w, n);
  }
  return result;
}

void write_loss_csv(const std::string& path, const std::vector<StepRecord>& history) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  std::fprintf(f, "step,lr,total,simple\n");
  for (const StepRecord& r : history) {
    std::fprintf(f, "%lld,%.12g,%.12g,%.12g\n", static_cast<long long>(r.step), r.lr, r.total,
                 r.simple);
  }
  if (std::fclose(f) != 0) throw FormatError("failed to write '" + path + "'");
}

}  // namespace timotion
