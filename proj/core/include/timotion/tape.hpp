// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "timotion/array.hpp"

namespace timotion::ad {

using timotion::Array;
using timotion::Shape;

// Trainable tensor. Lives outside any tape; gradients accumulate across
// backward() calls until zero_grad().
struct Parameter {
  std::string name;
  Array value;
  Array grad;

  Parameter(std::string n, Array v)
      : name(std::move(n)), value(std::move(v)), grad(Array::zeros(value.shape)) {}

  void zero_grad() {
    for (double& g : grad.data) g = 0.0;
  }
};

class Tape;

// Handle to a tape node. Cheap to copy; only valid while its tape is alive
// and unreset.
struct Var {
  Tape* tape = nullptr;
  int32_t id = -1;

  const Array& val() const;
  const Shape& shape() const;
};

// Record of a forward computation over dense arrays. Operations append nodes;
// backward() walks the record once in reverse creation order, which is a
// topological order by construction.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Array value);
  Var leaf(double scalar) { return leaf(Array::scalar(scalar)); }
  Var param(Parameter& p);

  // Seeds d(out)/d(out) = 1 and accumulates gradients down to every reachable
  // node, then adds leaf gradients into their Parameters. out must hold a
  // single element.
  void backward(Var out);

  const Array& value(Var v) const;
  // Gradient of the last backward() target w.r.t. v. Zero array if v was not
  // reached.
  Array grad(Var v) const;

  void reset();
  int64_t node_count() const { return static_cast<int64_t>(nodes_.size()); }

  // Used by operation implementations. The callback receives the tape and the
  // id of the node it belongs to, so it can read its own output gradient.
  using BackFn = std::function<void(Tape&, int32_t)>;
  Var make(Array value, BackFn back);
  Array& grad_buffer(int32_t id);
  bool grad_live(int32_t id) const;
  const Array& node_value(int32_t id) const { return nodes_[static_cast<size_t>(id)].value; }

 private:
  struct Node {
    Array value;
    Array grad;  // empty until first accumulation
    BackFn back;
    Parameter* param = nullptr;
  };
  std::deque<Node> nodes_;
};

inline const Array& Var::val() const { return tape->value(*this); }
inline const Shape& Var::shape() const { return tape->value(*this).shape; }

// ---------------------------------------------------------------------------
// Operations. All validate shapes and report mismatches naming both shapes.
// No implicit broadcasting; the only widening is the bias row in linear() and
// conv1d() and the explicit repeat_rows().

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);       // elementwise
Var div(Var a, Var b);       // elementwise
Var affine(Var a, double scale, double shift);
inline Var scale(Var a, double s) { return affine(a, s, 0.0); }
inline Var neg(Var a) { return affine(a, -1.0, 0.0); }

Var matmul(Var a, Var b);
Var transpose(Var a);

Var concat_cols(Var a, Var b);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(Var a, Var b);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, int64_t start, int64_t count);
std::pair<Var, Var> split_cols(Var a, int64_t left_cols);
Var gather_rows(Var a, std::vector<int64_t> index);
Var slice_rows(Var a, int64_t start, int64_t count);
Var shift_rows_down(Var a);  // row 0 becomes zeros, row t takes old row t-1
Var repeat_rows(Var row, int64_t rows);  // 1xC -> rowsxC
Var scale_rows(Var a, Var s);  // NxC scaled per row by the Nx1 column s

Var exp(Var a);
Var sqrt(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var square(Var a);

Var max_reduce(Var a);             // 1x1; subgradient goes to first argmax
Var softmax_rows(Var a);           // softmax over the last axis, per row
Var layer_norm_rows(Var a, double eps = 1e-5);  // zero mean/unit var per row

// x: LxCin, w: {k, Cin, Cout}, b: {1, Cout}. Zero padding, output length L.
// Even k pads one short on the right.
Var conv1d(Var x, Var w, Var b);
// x: NxIn, w: InxOut, b: {1, Out}; y = x.w + b per row.
Var linear(Var x, Var w, Var b);

Var sum(Var a);      // 1x1
Var row_sum(Var a);  // Lx1, sum over the last axis
Var mse(Var a, Var b);  // 1x1, mean over all elements

// Weighted running average with exp(k) weights over rows:
//   h_t = sum_{i<=t} exp(k_i) * v_i / sum_{i<=t} exp(k_i), per channel.
// Forward runs the max-shifted recurrence, so any finite k is safe; backward
// uses the closed form with the same shifting.
Var wkv(Var k, Var v);

// ---------------------------------------------------------------------------
// Gradient checking against central finite differences.
//
// Relative error per coordinate: |analytic - central| over
// (|analytic| + |central| + 1e-6); result is the max over all coordinates of
// all inputs. The absolute floor keeps derivatives below what central
// differences can resolve from reporting spurious disagreement.

using TapeFn = std::function<Var(Tape&, const std::vector<Var>&)>;

double grad_check(const TapeFn& f, const std::vector<Array>& point, double eps = 1e-5);

// Same check, but differentiating w.r.t. live Parameters. build() must
// construct the full forward pass on the given tape using those parameters.
double grad_check_params(const std::function<Var(Tape&)>& build,
                         const std::vector<Parameter*>& params, double eps = 1e-5);

}  // namespace timotion::ad
