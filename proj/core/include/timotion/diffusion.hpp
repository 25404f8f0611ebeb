// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "timotion/array.hpp"
#include "timotion/denoiser.hpp"
#include "timotion/motion.hpp"
#include "timotion/rng.hpp"

namespace timotion {

// Forward-process tables. Index convention: t = 0 is clean data and the
// tables are 1-indexed by diffusion step, so each vector has T+1 entries with
// entry 0 fixed at beta=0, alpha=1, alpha_bar=1.
struct NoiseSchedule {
  int64_t T = 0;
  std::vector<double> beta;       // in (0, 0.999]
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // running product of alpha, strictly decreasing

  void validate() const;
  double ab(int64_t t) const;  // alpha_bar with bounds checking
};

// alpha_bar follows f(t)/f(0) with f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2),
// s = 0.008, rebuilt as a running product of the per-step ratios so the table
// identities hold exactly; each step's beta is clipped to 0.999.
NoiseSchedule cosine_schedule(int64_t T);

struct SamplerConfig {
  int64_t steps = 50;
  double eta = 0.0;
  double guidance = 3.5;
  uint64_t seed = 0;
  // In-betweening renoises both persons with one shared draw, as specified;
  // flip for independent noise per person.
  bool shared_noise = true;

  void validate(int64_t T) const;
};

// sqrt(ab_t) * x_0 + sqrt(1 - ab_t) * eps.
Array q_sample(const NoiseSchedule& sched, const Array& x_0, int64_t t, const Array& eps);

// The noise a clean-sample prediction implies: (x_t - sqrt(ab_t) * x_hat_0)
// divided by sqrt(1 - ab_t).
Array recover_eps(const NoiseSchedule& sched, const Array& x_t, const Array& x_hat_0, int64_t t);

// Posterior variance of the ancestral reverse step at t.
double ddpm_variance(const NoiseSchedule& sched, int64_t t);

// One ancestral reverse step. noise must be a standard normal draw of x_t's
// shape; it is ignored at t = 1, where the step is deterministic.
Array ddpm_step(const NoiseSchedule& sched, const Array& x_t, const Array& x_hat_0, int64_t t,
                const Array& noise);
Array ddpm_step(const NoiseSchedule& sched, const Array& x_t, const Array& x_hat_0, int64_t t,
                Rng& rng);

// Deterministic-by-default reverse step from t to t_prev < t. Draws from rng
// only when eta > 0 and the step variance is nonzero.
Array ddim_step(const NoiseSchedule& sched, const Array& x_t, const Array& x_hat_0, int64_t t,
                int64_t t_prev, double eta, Rng& rng);

// pred_uncond + w * (pred_cond - pred_uncond), elementwise.
Array cfg_combine(const Array& pred_cond, const Array& pred_uncond, double w);

// Strictly decreasing step subsequence: uniform stride over [1, T] starting
// at T, `steps` entries. steps = T gives T, T-1, ..., 1.
std::vector<int64_t> sample_timesteps(int64_t T, int64_t steps);

// Conditional and null forward passes combined in noise space with weight w,
// returned as clean-sample predictions for both persons.
std::pair<Array, Array> guided_x0(const Denoiser& model, const NoiseSchedule& sched,
                                  const Array& x_a, const Array& x_b, int64_t t,
                                  const std::vector<uint32_t>& tokens, double w);

// Draw x_T ~ N(0, I) per person and run the guided reverse chain.
MotionPair sample(const Denoiser& model, const NoiseSchedule& sched,
                  const std::vector<uint32_t>& tokens, int64_t length, const SamplerConfig& cfg);

// Hold the first and last ceil(L*fix_ratio) frames at the ground truth while
// generating the middle: every step overwrites those frames of the clean
// prediction and renoises to the next step's level.
MotionPair inbetween_sample(const Denoiser& model, const NoiseSchedule& sched,
                            const MotionPair& gt, double fix_ratio, const SamplerConfig& cfg);

}  // namespace timotion
