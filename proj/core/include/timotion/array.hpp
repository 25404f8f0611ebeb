// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "timotion/errors.hpp"

namespace timotion {

using Shape = std::vector<int64_t>;

std::string shape_to_string(const Shape& s);

// Dense row-major array of doubles. Rank 1..3 in practice; most of the model
// works on rank-2 (rows x cols).
struct Array {
  Shape shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(Shape s);
  Array(Shape s, std::vector<double> values);

  static Array zeros(Shape s) { return Array(std::move(s)); }
  static Array full(Shape s, double v);
  static Array scalar(double v) { return Array({1, 1}, {v}); }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }

  // Rank-2 accessors. rows() is the first extent, cols() the last.
  int64_t rows() const;
  int64_t cols() const;
  double& at(int64_t r, int64_t c);
  double at(int64_t r, int64_t c) const;
  double& operator()(int64_t r, int64_t c) { return at(r, c); }
  double operator()(int64_t r, int64_t c) const { return at(r, c); }

  bool same_shape(const Array& other) const { return shape == other.shape; }
  bool all_finite() const;
};

int64_t shape_numel(const Shape& s);

// Throws DimensionError naming both shapes when they differ.
void check_same_shape(const Array& a, const Array& b, const char* op);
void check_rank2(const Array& a, const char* op);

double max_abs_diff(const Array& a, const Array& b);

}  // namespace timotion
