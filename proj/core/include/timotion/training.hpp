// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "timotion/denoiser.hpp"
#include "timotion/diffusion.hpp"
#include "timotion/losses.hpp"

namespace timotion {

struct OptimConfig {
  double lr = 1e-4;  // peak learning rate
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 2e-5;

  void validate() const;
};

// Adam with decoupled weight decay. Gradients accumulate on the parameters
// between calls; step() consumes and clears them.
class AdamW {
 public:
  AdamW(std::vector<ad::Parameter*> params, OptimConfig cfg);

  void step(double lr);
  int64_t steps_taken() const { return t_; }

 private:
  std::vector<ad::Parameter*> params_;
  OptimConfig cfg_;
  std::vector<Array> m_, v_;
  int64_t t_ = 0;
};

// Linear ramp over the first `warmup` steps, then cosine decay to zero
// across the remainder. `step` is 0-based.
double lr_schedule(int64_t step, int64_t total, int64_t warmup, double peak);

struct TrainConfig {
  int64_t steps = 2000;
  int64_t batch = 4;
  int64_t warmup = 100;
  uint64_t seed = 42;
  int64_t smooth_window = 50;
  OptimConfig optim;
  LossWeights weights;
  double d_max = 1.0;

  void validate() const;
};

struct StepRecord {
  int64_t step = 0;  // 1-based
  double lr = 0.0;
  double total = 0.0;   // batch-mean weighted loss
  double simple = 0.0;  // batch-mean reconstruction term
};

struct TrainResult {
  std::vector<StepRecord> history;
  // Mean total loss over the first and last smooth_window steps.
  double initial_smoothed = 0.0;
  double final_smoothed = 0.0;
};

using StepCallback = std::function<void(const StepRecord&)>;

// Denoising score-matching loop: per example draw a pair, a timestep, and
// fresh noise, predict the clean sample from the noised one, and descend the
// weighted reconstruction loss. The text condition is dropped at the model's
// cfg_dropout rate so the null condition trains alongside.
TrainResult train(Denoiser& model, const NoiseSchedule& sched, const Dataset& data,
                  const TrainConfig& cfg, const StepCallback& on_step = {});

void write_loss_csv(const std::string& path, const std::vector<StepRecord>& history);

}  // namespace timotion
