// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include "timotion/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numeric>

#include "timotion/temporal.hpp"

namespace timotion {

void GradNormConfig::validate() const {
  if (length < 2) throw ConfigError("gradient norms: length must be at least 2");
  if (dim < 2) throw ConfigError("gradient norms: dim must be at least 2");
  if (trials < 1) throw ConfigError("gradient norms: trials must be at least 1");
  if (orthonormal_inputs && 2 * length < dim)
    throw ConfigError("gradient norms: orthonormal inputs need 2*length >= dim");
}

namespace {

// Scaled dot-product attention with distinct query and key/value sources.
// A causal mask keeps each interleaved query's key count comparable to the
// cross-attention baseline instead of spreading the softmax over 2L rows.
ad::Var attend(ad::Tape& t, ad::Var q_src, ad::Var kv_src, ad::Var wq, ad::Var wk,
               ad::Var wv, int64_t d, bool causal) {
  ad::Var scores = ad::scale(
      ad::matmul(ad::matmul(q_src, wq), ad::transpose(ad::matmul(kv_src, wk))),
      1.0 / std::sqrt(static_cast<double>(d)));
  if (causal) {
    int64_t n = t.value(scores).rows();
    Array mask({n, n});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) mask.at(i, j) = j <= i ? 0.0 : -1e30;
    scores = ad::add(scores, t.leaf(mask));
  }
  return ad::matmul(ad::softmax_rows(scores), ad::matmul(kv_src, wv));
}

ad::Var frobenius_sq(ad::Var a, ad::Var b) { return ad::sum(ad::square(ad::sub(a, b))); }

double grad_norm_sq(const ad::Parameter& p) {
  double s = 0.0;
  for (double g : p.grad.data) s += g * g;
  return s;
}

Array unit_rows(Shape shape, Rng& rng) {
  Array a(shape);
  for (double& v : a.data) v = rng.normal();
  for (int64_t r = 0; r < a.rows(); ++r) {
    double n = 0.0;
    for (int64_t c = 0; c < a.cols(); ++c) n += a.at(r, c) * a.at(r, c);
    n = std::sqrt(n);
    if (n > 0.0)
      for (int64_t c = 0; c < a.cols(); ++c) a.at(r, c) /= n;
  }
  return a;
}

// Modified Gram-Schmidt on columns; rows() >= cols() is checked upstream.
void orthonormalize_cols(Array& a) {
  int64_t n = a.rows(), m = a.cols();
  for (int64_t c = 0; c < m; ++c) {
    for (int64_t p = 0; p < c; ++p) {
      double dot = 0.0;
      for (int64_t r = 0; r < n; ++r) dot += a.at(r, p) * a.at(r, c);
      for (int64_t r = 0; r < n; ++r) a.at(r, c) -= dot * a.at(r, p);
    }
    double norm = 0.0;
    for (int64_t r = 0; r < n; ++r) norm += a.at(r, c) * a.at(r, c);
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw NumericError("gradient norms: degenerate basis draw");
    for (int64_t r = 0; r < n; ++r) a.at(r, c) /= norm;
  }
}

}  // namespace

SchemeResult separate_scheme(const Array& x_a, const Array& x_b, const Array& y_a,
                             const Array& y_b, const Array& wq, const Array& wk,
                             const Array& wv) {
  int64_t d = x_a.cols();
  ad::Tape t;
  ad::Parameter pq("wq", wq), pk("wk", wk), pv("wv", wv);
  ad::Var vq = t.param(pq), vk = t.param(pk), vv = t.param(pv);
  ad::Var a = t.leaf(x_a), b = t.leaf(x_b);
  ad::Var out_a = attend(t, a, b, vq, vk, vv, d, false);
  ad::Var out_b = attend(t, b, a, vq, vk, vv, d, false);
  ad::Var loss = ad::scale(
      ad::add(frobenius_sq(out_a, t.leaf(y_a)), frobenius_sq(out_b, t.leaf(y_b))), 0.5);
  t.backward(loss);
  SchemeResult r;
  r.out_a = out_a.val();
  r.out_b = out_b.val();
  r.grad_norm_sq = grad_norm_sq(pq) + grad_norm_sq(pk) + grad_norm_sq(pv);
  return r;
}

SchemeResult interleaved_scheme(const Array& x_a, const Array& x_b, const Array& y_a,
                                const Array& y_b, const Array& wq, const Array& wk,
                                const Array& wv) {
  int64_t d = x_a.cols();
  ad::Tape t;
  ad::Parameter pq("wq", wq), pk("wk", wk), pv("wv", wv);
  ad::Var vq = t.param(pq), vk = t.param(pk), vv = t.param(pv);
  CausalSequence seq = causal_interleave(t.leaf(x_a), t.leaf(x_b));
  ad::Var mixed = attend(t, seq.rows, seq.rows, vq, vk, vv, d, true);
  auto [out_a, out_b] = deinterleave(CausalSequence{mixed, seq.origin});
  ad::Var loss = ad::scale(
      ad::add(frobenius_sq(out_a, t.leaf(y_a)), frobenius_sq(out_b, t.leaf(y_b))), 0.5);
  t.backward(loss);
  SchemeResult r;
  r.out_a = out_a.val();
  r.out_b = out_b.val();
  r.grad_norm_sq = grad_norm_sq(pq) + grad_norm_sq(pk) + grad_norm_sq(pv);
  return r;
}

GradNormReport gradient_norm_experiment(const GradNormConfig& cfg) {
  cfg.validate();
  GradNormReport report;
  report.config = cfg;
  report.trials.reserve(static_cast<size_t>(cfg.trials));
  Rng base = Rng(cfg.seed).split("gradnorm");
  int64_t larger = 0;
  double ratio_sum = 0.0;
  for (int64_t i = 0; i < cfg.trials; ++i) {
    Rng rng = base.split(static_cast<uint64_t>(i));
    Array wq = xavier_normal({cfg.dim, cfg.dim}, rng);
    Array wk = xavier_normal({cfg.dim, cfg.dim}, rng);
    Array wv = xavier_normal({cfg.dim, cfg.dim}, rng);
    Array x_a, x_b;
    if (cfg.orthonormal_inputs) {
      Array merged({2 * cfg.length, cfg.dim});
      for (double& v : merged.data) v = rng.normal();
      orthonormalize_cols(merged);
      x_a = Array({cfg.length, cfg.dim});
      x_b = Array({cfg.length, cfg.dim});
      for (int64_t f = 0; f < cfg.length; ++f) {
        for (int64_t c = 0; c < cfg.dim; ++c) {
          x_a.at(f, c) = merged.at(2 * f, c);
          x_b.at(f, c) = merged.at(2 * f + 1, c);
        }
      }
    } else {
      x_a = unit_rows({cfg.length, cfg.dim}, rng);
      x_b = unit_rows({cfg.length, cfg.dim}, rng);
    }
    Array y_a = unit_rows({cfg.length, cfg.dim}, rng);
    Array y_b = unit_rows({cfg.length, cfg.dim}, rng);

    GradNormTrial trial;
    trial.norm_separate = separate_scheme(x_a, x_b, y_a, y_b, wq, wk, wv).grad_norm_sq;
    trial.norm_interleaved = interleaved_scheme(x_a, x_b, y_a, y_b, wq, wk, wv).grad_norm_sq;
    if (trial.norm_interleaved > trial.norm_separate) ++larger;
    if (trial.norm_separate > 0.0) ratio_sum += trial.norm_interleaved / trial.norm_separate;
    report.trials.push_back(trial);
  }
  report.fraction_interleaved_larger =
      static_cast<double>(larger) / static_cast<double>(cfg.trials);
  report.mean_ratio = ratio_sum / static_cast<double>(cfg.trials);
  return report;
}

void write_gradnorm_csv(const std::string& path, const GradNormReport& report) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  std::fprintf(f, "trial,norm_separate,norm_interleaved\n");
  for (size_t i = 0; i < report.trials.size(); ++i) {
    std::fprintf(f, "%zu,%.12g,%.12g\n", i, report.trials[i].norm_separate,
                 report.trials[i].norm_interleaved);
  }
  if (std::fclose(f) != 0) throw FormatError("failed to write '" + path + "'");
}

// ---------------------------------------------------------------------------
// Spectrum

namespace {

bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 decimation-in-time transform, in place.
void fft_pow2(std::vector<std::complex<double>>& x) {
  size_t n = x.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = x[i + k];
        std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

std::vector<double> one_sided_amplitudes(const std::vector<double>& signal) {
  size_t n = signal.size();
  size_t bins = n / 2 + 1;
  std::vector<double> amp(bins);
  if (is_pow2(static_cast<int64_t>(n))) {
    std::vector<std::complex<double>> buf(signal.begin(), signal.end());
    fft_pow2(buf);
    for (size_t k = 0; k < bins; ++k) amp[k] = std::abs(buf[k]);
  } else {
    for (size_t k = 0; k < bins; ++k) {
      std::complex<double> acc(0.0, 0.0);
      for (size_t t = 0; t < n; ++t) {
        double ang = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(t) /
                     static_cast<double>(n);
        acc += signal[t] * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      amp[k] = std::abs(acc);
    }
  }
  return amp;
}

}  // namespace

SpectrumReport spectrum_analysis(const Array& features, double cutoff_fraction) {
  if (features.rows() < 8)
    throw UsageError("spectrum: need at least 8 frames, got " + std::to_string(features.rows()));
  if (cutoff_fraction < 0.0 || cutoff_fraction >= 1.0)
    throw ConfigError("spectrum: cutoff fraction must lie in [0, 1)");
  int64_t L = features.rows(), C = features.cols();
  int64_t bins = L / 2 + 1;
  int64_t cutoff_bin = static_cast<int64_t>(std::floor(cutoff_fraction * static_cast<double>(bins - 1)));

  SpectrumReport report;
  report.cutoff_fraction = cutoff_fraction;
  report.magnitude = Array({bins, C});
  double prop_sum = 0.0;
  std::vector<double> signal(static_cast<size_t>(L));
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t t = 0; t < L; ++t) signal[static_cast<size_t>(t)] = features.at(t, c);
    std::vector<double> amp = one_sided_amplitudes(signal);
    double total = 0.0, high = 0.0, peak = 0.0;
    for (int64_t k = 0; k < bins; ++k) {
      total += amp[static_cast<size_t>(k)];
      if (k > cutoff_bin) high += amp[static_cast<size_t>(k)];
      peak = std::max(peak, amp[static_cast<size_t>(k)]);
    }
    if (total > 0.0) prop_sum += high / total;
    double inv_peak = peak > 0.0 ? 1.0 / peak : 0.0;
    for (int64_t k = 0; k < bins; ++k)
      report.magnitude.at(k, c) = amp[static_cast<size_t>(k)] * inv_peak;
  }
  report.high_freq_proportion = prop_sum / static_cast<double>(C);
  return report;
}

void write_spectrum_csv(const std::string& path, const SpectrumReport& report) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  std::fprintf(f, "bin");
  for (int64_t c = 0; c < report.magnitude.cols(); ++c)
    std::fprintf(f, ",ch%lld", static_cast<long long>(c));
  std::fprintf(f, "\n");
  for (int64_t k = 0; k < report.magnitude.rows(); ++k) {
    std::fprintf(f, "%lld", static_cast<long long>(k));
    for (int64_t c = 0; c < report.magnitude.cols(); ++c)
      std::fprintf(f, ",%.12g", report.magnitude.at(k, c));
    std::fprintf(f, "\n");
  }
  if (std::fclose(f) != 0) throw FormatError("failed to write '" + path + "'");
}

// ---------------------------------------------------------------------------
// Sample-set statistics

namespace {

// Indices sorted by content so the selection ignores input order. Ties are
// interchangeable by construction.
std::vector<size_t> canonical_order(const std::vector<Array>& motions) {
  std::vector<size_t> idx(motions.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    const Array& x = motions[a];
    const Array& y = motions[b];
    if (x.shape != y.shape) return x.shape < y.shape;
    return x.data < y.data;
  });
  return idx;
}

void shuffle_indices(std::vector<size_t>& idx, Rng& rng) {
  for (size_t i = idx.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)));
    std::swap(idx[i - 1], idx[j]);
  }
}

double motion_distance(const Array& a, const Array& b) {
  if (a.shape != b.shape)
    throw DimensionError("sample statistics: motions have mismatched shapes");
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double paired_subset_distance(const std::vector<Array>& motions, int64_t subset, Rng rng) {
  std::vector<size_t> idx = canonical_order(motions);
  shuffle_indices(idx, rng);
  double sum = 0.0;
  for (int64_t i = 0; i < subset; ++i) {
    sum += motion_distance(motions[idx[static_cast<size_t>(i)]],
                           motions[idx[static_cast<size_t>(subset + i)]]);
  }
  return sum / static_cast<double>(subset);
}

}  // namespace

double diversity_metric(const std::vector<Array>& motions, int64_t subset, uint64_t seed) {
  if (subset < 1) throw UsageError("diversity: subset size must be at least 1");
  if (static_cast<int64_t>(motions.size()) < 2 * subset) {
    throw UsageError("diversity: need at least " + std::to_string(2 * subset) +
                     " motions, got " + std::to_string(motions.size()));
  }
  return paired_subset_distance(motions, subset, Rng(seed).split("diversity"));
}

double mmodality_metric(const std::vector<std::vector<Array>>& groups, int64_t subset,
                        uint64_t seed) {
  if (subset < 1) throw UsageError("mmodality: subset size must be at least 1");
  if (groups.empty()) throw UsageError("mmodality: no groups given");
  Rng base = Rng(seed).split("mmodality");
  double sum = 0.0;
  for (size_t c = 0; c < groups.size(); ++c) {
    if (static_cast<int64_t>(groups[c].size()) < 2 * subset) {
      throw UsageError("mmodality: group " + std::to_string(c) + " needs at least " +
                       std::to_string(2 * subset) + " motions, got " +
                       std::to_string(groups[c].size()));
    }
    sum += paired_subset_distance(groups[c], subset, base.split(static_cast<uint64_t>(c)));
  }
  return sum / static_cast<double>(groups.size());
}

std::vector<SchemeCount> compare_schemes(const DenoiserConfig& base) {
  std::vector<SchemeCount> out;
  for (ModelVariant v : {ModelVariant::kSeparate, ModelVariant::kInterleaved,
                         ModelVariant::kRoleEvolving, ModelVariant::kFull}) {
    DenoiserConfig cfg = base;
    cfg.variant = v;
    if (v == ModelVariant::kSeparate) cfg.mixing.backend = MixingBackend::kAttention;
    out.push_back({v, count_parameters(cfg)});
  }
  return out;
}

}  // namespace timotion
