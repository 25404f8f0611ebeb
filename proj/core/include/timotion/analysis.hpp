// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "timotion/denoiser.hpp"

namespace timotion {

// ---------------------------------------------------------------------------
// Gradient-norm comparison between the two interaction schemes.
//
// Scheme "separate": two cross-attentions, one per person, with shared
// weights. Scheme "interleaved": one causally masked self-attention over the
// interleaved sequence. Both are scored with the same targets and identical
// weight initializations, and the squared Frobenius norm of the gradient
// with respect to the shared weights is recorded.

struct GradNormConfig {
  int64_t length = 8;  // frames per person
  int64_t dim = 16;
  int64_t trials = 500;
  uint64_t seed = 0;
  // Replace the raw inputs with an orthonormal basis of their span before
  // running the schemes (columns of the interleaved matrix).
  bool orthonormal_inputs = false;

  void validate() const;
};

struct SchemeResult {
  Array out_a, out_b;   // per-person outputs, L x d
  double grad_norm_sq;  // sum over the three shared weights
};

SchemeResult separate_scheme(const Array& x_a, const Array& x_b, const Array& y_a,
                             const Array& y_b, const Array& wq, const Array& wk,
                             const Array& wv);
SchemeResult interleaved_scheme(const Array& x_a, const Array& x_b, const Array& y_a,
                                const Array& y_b, const Array& wq, const Array& wk,
                                const Array& wv);

struct GradNormTrial {
  double norm_separate;
  double norm_interleaved;
};

struct GradNormReport {
  GradNormConfig config;
  std::vector<GradNormTrial> trials;
  double fraction_interleaved_larger = 0.0;
  double mean_ratio = 0.0;  // mean of interleaved / separate
};

GradNormReport gradient_norm_experiment(const GradNormConfig& cfg);
void write_gradnorm_csv(const std::string& path, const GradNormReport& report);

// ---------------------------------------------------------------------------
// Amplitude spectrum of motion features along time.

struct SpectrumReport {
  // One-sided amplitudes, (L/2 + 1) rows by C channels, each channel scaled
  // to peak 1. All-zero channels stay zero.
  Array magnitude;
  double cutoff_fraction = 0.5;
  // Share of total amplitude above the cutoff, averaged over channels.
  double high_freq_proportion = 0.0;
};

// Per-channel DFT of an L x C feature matrix. Power-of-two lengths go
// through an in-place FFT; everything else falls back to the direct sum.
SpectrumReport spectrum_analysis(const Array& features, double cutoff_fraction = 0.5);
void write_spectrum_csv(const std::string& path, const SpectrumReport& report);

// ---------------------------------------------------------------------------
// Sample-set statistics. Motions are compared as flattened frame matrices.
// Selection works on a content-canonical ordering, so reordering the inputs
// never changes the result for a given seed.

// Mean pairwise distance between two disjoint random subsets of size subset.
double diversity_metric(const std::vector<Array>& motions, int64_t subset, uint64_t seed);

// Same, but within groups that share a condition, averaged over groups.
double mmodality_metric(const std::vector<std::vector<Array>>& groups, int64_t subset,
                        uint64_t seed);

// ---------------------------------------------------------------------------
// Parameter counts of the four model variants at a common width.

struct SchemeCount {
  ModelVariant variant;
  int64_t params;
};

std::vector<SchemeCount> compare_schemes(const DenoiserConfig& base);

}  // namespace timotion
