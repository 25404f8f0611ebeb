// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include "timotion/diffusion.hpp"

#include <cmath>

namespace timotion {

namespace {

constexpr double kCosineOffset = 0.008;
constexpr double kBetaCap = 0.999;

double cosine_f(double t, double T) {
  double u = (t / T + kCosineOffset) / (1.0 + kCosineOffset);
  double c = std::cos(u * 3.14159265358979323846 * 0.5);
  return c * c;
}

Array normal_array(Shape shape, Rng& rng) {
  Array a(std::move(shape));
  for (double& v : a.data) v = rng.normal();
  return a;
}

}  // namespace

void NoiseSchedule::validate() const {
  if (T < 2) throw ConfigError("schedule needs at least 2 steps, got " + std::to_string(T));
  size_t n = static_cast<size_t>(T) + 1;
  if (beta.size() != n || alpha.size() != n || alpha_bar.size() != n) {
    throw ConfigError("schedule tables must have T+1 entries");
  }
  if (alpha_bar[0] != 1.0) throw ConfigError("alpha_bar[0] must be exactly 1");
  for (int64_t t = 1; t <= T; ++t) {
    size_t i = static_cast<size_t>(t);
    if (!(beta[i] > 0.0 && beta[i] <= kBetaCap)) {
      throw ConfigError("beta[" + std::to_string(t) + "] outside (0, 0.999]");
    }
    if (alpha[i] != 1.0 - beta[i]) throw ConfigError("alpha table inconsistent with beta");
    if (!(alpha_bar[i] < alpha_bar[i - 1])) {
      throw ConfigError("alpha_bar must be strictly decreasing at t=" + std::to_string(t));
    }
  }
  if (!(alpha_bar[static_cast<size_t>(T)] < 1e-3)) {
    throw ConfigError("alpha_bar[T] must fall below 1e-3");
  }
}

double NoiseSchedule::ab(int64_t t) const {
  if (t < 0 || t > T) {
    throw UsageError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
  }
  return alpha_bar[static_cast<size_t>(t)];
}

NoiseSchedule cosine_schedule(int64_t T) {
  if (T < 2) throw ConfigError("schedule needs at least 2 steps, got " + std::to_string(T));
  NoiseSchedule s;
  s.T = T;
  size_t n = static_cast<size_t>(T) + 1;
  s.beta.assign(n, 0.0);
  s.alpha.assign(n, 1.0);
  s.alpha_bar.assign(n, 1.0);
  double f0 = cosine_f(0.0, static_cast<double>(T));
  double prev_f = f0;
  for (int64_t t = 1; t <= T; ++t) {
    double f = cosine_f(static_cast<double>(t), static_cast<double>(T));
    double b = std::min(kBetaCap, 1.0 - f / prev_f);
    size_t i = static_cast<size_t>(t);
    s.beta[i] = b;
    s.alpha[i] = 1.0 - b;
    s.alpha_bar[i] = s.alpha_bar[i - 1] * s.alpha[i];
    prev_f = f;
  }
  s.validate();
  return s;
}

void SamplerConfig::validate(int64_t T) const {
  if (steps < 1 || steps > T) {
    throw ConfigError("sampler steps " + std::to_string(steps) + " outside [1, " +
                      std::to_string(T) + "]");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
  // Zero is the pure unconditional path.
  if (!(guidance >= 0.0) || !std::isfinite(guidance)) {
    throw ConfigError("guidance scale must be finite and non-negative");
  }
}

Array q_sample(const NoiseSchedule& sched, const Array& x_0, int64_t t, const Array& eps) {
  check_same_shape(x_0, eps, "q_sample");
  double ab = sched.ab(t);
  double sa = std::sqrt(ab), se = std::sqrt(1.0 - ab);
  Array out = x_0;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = sa * out.data[i] + se * eps.data[i];
  return out;
}

Array recover_eps(const NoiseSchedule& sched, const Array& x_t, const Array& x_hat_0,
                  int64_t t) {
  check_same_shape(x_t, x_hat_0, "recover_eps");
  if (t < 1) throw UsageError("noise recovery needs t >= 1, got " + std::to_string(t));
  double ab = sched.ab(t);
  double sa = std::sqrt(ab), inv_se = 1.0 / std::sqrt(1.0 - ab);
  Array out = x_t;
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = (out.data[i] - sa * x_hat_0.data[i]) * inv_se;
  }
  return out;
}

double ddpm_variance(const NoiseSchedule& sched, int64_t t) {
  if (t < 1) throw UsageError("reverse step needs t >= 1, got " + std::to_string(t));
  double ab_t = sched.ab(t), ab_prev = sched.ab(t - 1);
  return (1.0 - ab_prev) / (1.0 - ab_t) * sched.beta[static_cast<size_t>(t)];
}

Array ddpm_step(const NoiseSchedule& sched, const Array& x_t, const Array& x_hat_0, int64_t t,
                const Array& noise) {
  check_same_shape(x_t, x_hat_0, "ddpm_step");
  check_same_shape(x_t, noise, "ddpm_step noise");
  if (t < 1) throw UsageError("reverse step needs t >= 1, got " + std::to_string(t));
  size_t i = static_cast<size_t>(t);
  double ab_t = sched.ab(t);
  double inv_sa = 1.0 / std::sqrt(sched.alpha[i]);
  double eps_coef = sched.beta[i] / std::sqrt(1.0 - ab_t);
  double sigma = t == 1 ? 0.0 : std::sqrt(ddpm_variance(sched, t));
  Array eps = recover_eps(sched, x_t, x_hat_0, t);
  Array out = x_t;
  for (size_t j = 0; j < out.data.size(); ++j) {
    out.data[j] = inv_sa * (out.data[j] - eps_coef * eps.data[j]) + sigma * noise.data[j];
  }
  return out;
}

Array ddpm_step(const NoiseSchedule& sched, const Array& x_t, const Array& x_hat_0, int64_t t,
                Rng& rng) {
  Array noise = t == 1 ? Array::zeros(x_t.shape) : normal_array(x_t.shape, rng);
  return ddpm_step(sched, x_t, x_hat_0, t, noise);
}

Array ddim_step(const NoiseSchedule& sched, const Array& x_t, const Array& x_hat_0, int64_t t,
                int64_t t_prev, double eta, Rng& rng) {
  check_same_shape(x_t, x_hat_0, "ddim_step");
  if (t_prev >= t) {
    throw UsageError("ddim step must move backward, got t=" + std::to_string(t) +
                     " to t_prev=" + std::to_string(t_prev));
  }
  double ab_t = sched.ab(t), ab_prev = sched.ab(t_prev);
  double sigma =
      eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_prev);
  double dir = 1.0 - ab_prev - sigma * sigma;
  // Guard the square root against rounding when sigma^2 lands on 1 - ab_prev.
  double dir_coef = dir > 0.0 ? std::sqrt(dir) : 0.0;
  double sa_prev = std::sqrt(ab_prev);
  Array eps = recover_eps(sched, x_t, x_hat_0, t);
  Array out = x_hat_0;
  for (size_t j = 0; j < out.data.size(); ++j) {
    out.data[j] = sa_prev * out.data[j] + dir_coef * eps.data[j];
  }
  if (eta > 0.0 && sigma > 0.0) {
    Array z = normal_array(x_t.shape, rng);
    for (size_t j = 0; j < out.data.size(); ++j) out.data[j] += sigma * z.data[j];
  }
  return out;
}

Array cfg_combine(const Array& pred_cond, const Array& pred_uncond, double w) {
  check_same_shape(pred_cond, pred_uncond, "cfg_combine");
  Array out = pred_uncond;
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] += w * (pred_cond.data[i] - out.data[i]);
  }
  return out;
}

std::vector<int64_t> sample_timesteps(int64_t T, int64_t steps) {
  if (steps < 1 || steps > T) {
    throw ConfigError("sampler steps " + std::to_string(steps) + " outside [1, " +
                      std::to_string(T) + "]");
  }
  std::vector<int64_t> ts;
  ts.reserve(static_cast<size_t>(steps));
  for (int64_t i = 0; i < steps; ++i) ts.push_back(T * (steps - i) / steps);
  return ts;
}

std::pair<Array, Array> guided_x0(const Denoiser& model, const NoiseSchedule& sched,
                                  const Array& x_a, const Array& x_b, int64_t t,
                                  const std::vector<uint32_t>& tokens, double w) {
  auto [ca, cb] = model.predict(x_a, x_b, t, tokens, false);
  auto [ua, ub] = model.predict(x_a, x_b, t, tokens, true);
  Array eps_a = cfg_combine(recover_eps(sched, x_a, ca, t), recover_eps(sched, x_a, ua, t), w);
  Array eps_b = cfg_combine(recover_eps(sched, x_b, cb, t), recover_eps(sched, x_b, ub, t), w);
  // Back to a clean-sample prediction under the same forward identity.
  double ab = sched.ab(t);
  double inv_sa = 1.0 / std::sqrt(ab), se = std::sqrt(1.0 - ab);
  Array x0_a = x_a, x0_b = x_b;
  for (size_t i = 0; i < x0_a.data.size(); ++i) {
    x0_a.data[i] = (x0_a.data[i] - se * eps_a.data[i]) * inv_sa;
    x0_b.data[i] = (x0_b.data[i] - se * eps_b.data[i]) * inv_sa;
  }
  return {x0_a, x0_b};
}

MotionPair sample(const Denoiser& model, const NoiseSchedule& sched,
                  const std::vector<uint32_t>& tokens, int64_t length,
                  const SamplerConfig& cfg) {
  cfg.validate(sched.T);
  Rng rng = Rng(cfg.seed).split("sample");
  Shape shape = {length, model.cfg.frame_width()};
  Array x_a = normal_array(shape, rng);
  Array x_b = normal_array(shape, rng);
  std::vector<int64_t> ts = sample_timesteps(sched.T, cfg.steps);
  for (size_t i = 0; i < ts.size(); ++i) {
    int64_t t = ts[i];
    int64_t t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    auto [x0_a, x0_b] = guided_x0(model, sched, x_a, x_b, t, tokens, cfg.guidance);
    x_a = ddim_step(sched, x_a, x0_a, t, t_prev, cfg.eta, rng);
    x_b = ddim_step(sched, x_b, x0_b, t, t_prev, cfg.eta, rng);
  }
  MotionPair out;
  out.a = std::move(x_a);
  out.b = std::move(x_b);
  out.valid_len = static_cast<uint32_t>(length);
  out.tokens = tokens;
  return out;
}

MotionPair inbetween_sample(const Denoiser& model, const NoiseSchedule& sched,
                            const MotionPair& gt, double fix_ratio, const SamplerConfig& cfg) {
  cfg.validate(sched.T);
  if (!(fix_ratio > 0.0 && fix_ratio < 0.5)) {
    throw UsageError("fix ratio must lie in (0, 0.5), got " + std::to_string(fix_ratio));
  }
  check_same_shape(gt.a, gt.b, "inbetween_sample");
  int64_t length = gt.a.rows();
  int64_t n_fix = static_cast<int64_t>(
      std::ceil(static_cast<double>(length) * fix_ratio));
  if (2 * n_fix > length) n_fix = length / 2;

  auto overwrite = [&](Array& pred, const Array& truth) {
    for (int64_t r = 0; r < n_fix; ++r) {
      for (int64_t c = 0; c < pred.cols(); ++c) {
        pred.at(r, c) = truth.at(r, c);
        pred.at(length - 1 - r, c) = truth.at(length - 1 - r, c);
      }
    }
  };

  Rng rng = Rng(cfg.seed).split("inbetween");
  Array x_a = normal_array(gt.a.shape, rng);
  Array x_b = normal_array(gt.b.shape, rng);
  std::vector<int64_t> ts = sample_timesteps(sched.T, cfg.steps);
  for (size_t i = 0; i < ts.size(); ++i) {
    int64_t t = ts[i];
    int64_t t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    auto [x0_a, x0_b] = guided_x0(model, sched, x_a, x_b, t, gt.tokens, cfg.guidance);
    overwrite(x0_a, gt.a);
    overwrite(x0_b, gt.b);
    if (t_prev == 0) {
      x_a = std::move(x0_a);
      x_b = std::move(x0_b);
      break;
    }
    double sa = std::sqrt(sched.ab(t_prev)), se = std::sqrt(1.0 - sched.ab(t_prev));
    Array eps_a = normal_array(gt.a.shape, rng);
    Array eps_b = cfg.shared_noise ? eps_a : normal_array(gt.b.shape, rng);
    for (size_t j = 0; j < x_a.data.size(); ++j) {
      x_a.data[j] = sa * x0_a.data[j] + se * eps_a.data[j];
      x_b.data[j] = sa * x0_b.data[j] + se * eps_b.data[j];
    }
  }
  MotionPair out;
  out.a = std::move(x_a);
  out.b = std::move(x_b);
  out.valid_len = gt.valid_len;
  out.tokens = gt.tokens;
  return out;
}

}  // namespace timotion
