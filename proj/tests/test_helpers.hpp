// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "timotion/array.hpp"
#include "timotion/rng.hpp"
#include "timotion/tape.hpp"

namespace tt {

using timotion::Array;
using timotion::Rng;
using timotion::Shape;

inline Array random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Array a(std::move(shape));
  for (double& v : a.data) v = rng.uniform(lo, hi);
  return a;
}

inline Array random_normal(Shape shape, Rng& rng, double scale = 1.0) {
  Array a(std::move(shape));
  for (double& v : a.data) v = scale * rng.normal();
  return a;
}

// Scalarize an op output against fixed random weights, so a gradient check
// exercises the whole Jacobian instead of just its action on all-ones.
inline timotion::ad::Var weighted_sum(timotion::ad::Var v, const Array& w) {
  return timotion::ad::sum(timotion::ad::mul(v, v.tape->leaf(w)));
}

inline bool message_mentions(const std::exception& e, const std::string& a, const std::string& b) {
  std::string m = e.what();
  return m.find(a) != std::string::npos && m.find(b) != std::string::npos;
}

// Overwrite every parameter with small random values, so identity-preserving
// zero inits stop masking structural differences.
inline void randomize_params(const std::vector<timotion::ad::Parameter*>& params, Rng& rng,
                             double scale = 0.1) {
  for (timotion::ad::Parameter* p : params) {
    for (double& v : p->value.data) v = scale * rng.normal();
  }
}

}  // namespace tt
