// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include "timotion/array.hpp"

#include <cmath>
#include <sstream>

namespace timotion {

std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    if (e < 1) throw DimensionError("non-positive extent in shape " + shape_to_string(s));
    n *= e;
  }
  return n;
}

Array::Array(Shape s) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
}

Array::Array(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw DimensionError("value count " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
  }
}

Array Array::full(Shape s, double v) {
  Array a(std::move(s));
  for (double& x : a.data) x = v;
  return a;
}

int64_t Array::rows() const {
  if (shape.empty()) throw DimensionError("rows() on rank-0 array");
  return shape.front();
}

int64_t Array::cols() const {
  if (shape.empty()) throw DimensionError("cols() on rank-0 array");
  return shape.back();
}

double& Array::at(int64_t r, int64_t c) {
  return data[static_cast<size_t>(r * cols() + c)];
}

double Array::at(int64_t r, int64_t c) const {
  return data[static_cast<size_t>(r * cols() + c)];
}

bool Array::all_finite() const {
  for (double x : data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_same_shape(const Array& a, const Array& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape) +
                         " vs " + shape_to_string(b.shape));
  }
}

void check_rank2(const Array& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 array, got shape " +
                         shape_to_string(a.shape));
  }
}

double max_abs_diff(const Array& a, const Array& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  }
  return m;
}

}  // namespace timotion
