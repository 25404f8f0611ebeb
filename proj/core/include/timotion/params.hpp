// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "timotion/rng.hpp"
#include "timotion/tape.hpp"

namespace timotion {

// Owns a model's parameters and gives them stable names for checkpoints.
class ParamRegistry {
 public:
  ad::Parameter& create(const std::string& name, Array init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    params_.emplace_back(name, std::move(init));
    index_[name] = params_.size() - 1;
    return params_.back();
  }

  ad::Parameter* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  std::vector<ad::Parameter*> all() {
    std::vector<ad::Parameter*> out;
    out.reserve(params_.size());
    for (ad::Parameter& p : params_) out.push_back(&p);
    return out;
  }

  std::vector<const ad::Parameter*> all() const {
    std::vector<const ad::Parameter*> out;
    out.reserve(params_.size());
    for (const ad::Parameter& p : params_) out.push_back(&p);
    return out;
  }

  int64_t total_size() const {
    int64_t n = 0;
    for (const ad::Parameter& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (ad::Parameter& p : params_) p.zero_grad();
  }

 private:
  std::deque<ad::Parameter> params_;  // deque keeps addresses stable
  std::unordered_map<std::string, size_t> index_;
};

// Fan-in scaled normal init.
inline Array xavier_normal(Shape shape, Rng& rng) {
  Array a(shape);
  int64_t fan_in = shape.size() >= 2 ? shape_numel(Shape(shape.begin(), shape.end() - 1))
                                     : shape.front();
  double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : a.data) v = s * rng.normal();
  return a;
}

}  // namespace timotion
