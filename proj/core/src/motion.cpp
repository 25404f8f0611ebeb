// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include "timotion/motion.hpp"

#include <cmath>
#include <functional>

namespace timotion {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kHipWidth = 0.1;
constexpr double kLegLength = 0.8;
constexpr double kSpineLink = 0.25;
constexpr double kContactHeight = 0.05;
constexpr double kContactSpeed = 0.02;

}  // namespace

void SkeletonSpec::validate() const {
  if (joint_count < 1) throw ConfigError("skeleton needs at least one joint");
  if (static_cast<int64_t>(parent.size()) != joint_count ||
      static_cast<int64_t>(bone_length.size()) != joint_count) {
    throw ConfigError("skeleton arrays disagree with joint count " + std::to_string(joint_count));
  }
  if (parent[0] != 0) throw ConfigError("joint 0 must be the root (its own parent)");
  for (int64_t j = 1; j < joint_count; ++j) {
    if (parent[j] < 0 || parent[j] >= j) {
      throw ConfigError("joint " + std::to_string(j) + " has parent " +
                        std::to_string(parent[j]) + "; parents must precede children");
    }
    if (!(bone_length[j] > 0.0)) {
      throw ConfigError("bone length of joint " + std::to_string(j) + " must be positive");
    }
  }
  if (foot_joints.size() > 4) throw ConfigError("at most four foot joints are supported");
  for (int64_t f : foot_joints) {
    if (f < 0 || f >= joint_count) {
      throw ConfigError("foot joint " + std::to_string(f) + " is out of range");
    }
  }
}

SkeletonSpec desk_skeleton(int64_t joint_count) {
  if (joint_count < 5) {
    throw ConfigError("desk skeleton needs at least 5 joints (root, hips, feet), got " +
                      std::to_string(joint_count));
  }
  SkeletonSpec s;
  s.joint_count = joint_count;
  s.parent = {0, 0, 0, 1, 2};
  s.bone_length = {0.0, kHipWidth, kHipWidth, kLegLength, kLegLength};
  s.foot_joints = {3, 4};
  for (int64_t j = 5; j < joint_count; ++j) {
    s.parent.push_back(j == 5 ? 0 : j - 1);
    s.bone_length.push_back(kSpineLink);
  }
  return s;
}

int64_t frame_dim(const SkeletonSpec& spec) {
  spec.validate();
  return FrameLayout(spec.joint_count).width();
}

Scenario parse_scenario(const std::string& name) {
  if (name == "approach_handshake") return Scenario::kApproachHandshake;
  if (name == "circle_around") return Scenario::kCircleAround;
  if (name == "mirror_dance") return Scenario::kMirrorDance;
  if (name == "push_retreat") return Scenario::kPushRetreat;
  throw UsageError("unknown scenario '" + name +
                   "' (expected approach_handshake, circle_around, mirror_dance or "
                   "push_retreat)");
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kApproachHandshake: return "approach_handshake";
    case Scenario::kCircleAround: return "circle_around";
    case Scenario::kMirrorDance: return "mirror_dance";
    default: return "push_retreat";
  }
}

std::vector<Scenario> all_scenarios() {
  return {Scenario::kApproachHandshake, Scenario::kCircleAround, Scenario::kMirrorDance,
          Scenario::kPushRetreat};
}

namespace {

// Integral of max(0, sin(u))^2 from 0 to phi. Each full cycle contributes
// pi/2, all of it during the sin > 0 half.
double hop_progress(double phi) {
  double cycles = std::floor(phi / kTwoPi);
  double r = phi - kTwoPi * cycles;
  double part = r <= kPi ? 0.5 * r - 0.25 * std::sin(2.0 * r) : 0.5 * kPi;
  return cycles * 0.5 * kPi + part;
}

// A person advances along its path only while airborne inside [lo, hi]; the
// body is frozen outside hops, which keeps stance feet exactly still.
struct Gait {
  double lo = 0.0;
  double hi = 2.0 * kTwoPi;

  double progress(double phi) const {
    double total = hop_progress(hi) - hop_progress(lo);
    if (total <= 0.0) return 0.0;
    double clamped = std::min(std::max(phi, lo), hi);
    return (hop_progress(clamped) - hop_progress(lo)) / total;
  }

  double lift(double phi) const {
    if (phi <= lo || phi >= hi) return 0.0;
    double s = std::sin(phi);
    return s > 0.0 ? s * s : 0.0;
  }
};

// rho in [0, 1] -> root ground position and facing angle.
using PathFn = std::function<void(double rho, double& x, double& z, double& heading)>;

void fill_person(Array& seq, const SkeletonSpec& spec, const std::vector<double>& phi,
                 const Gait& gait, double bob_amp, const PathFn& path) {
  FrameLayout lay(spec.joint_count);
  int64_t L = seq.rows();

  // local offsets relative to the root, before yaw
  std::vector<double> ox(spec.joint_count, 0.0), oy(spec.joint_count, 0.0),
      oz(spec.joint_count, 0.0);
  ox[1] = -kHipWidth;
  ox[2] = kHipWidth;
  ox[3] = -kHipWidth;
  oy[3] = -kLegLength;
  ox[4] = kHipWidth;
  oy[4] = -kLegLength;
  for (int64_t j = 5; j < spec.joint_count; ++j) oy[j] = kSpineLink * static_cast<double>(j - 4);

  for (int64_t t = 0; t < L; ++t) {
    double x, z, heading;
    path(gait.progress(phi[t]), x, z, heading);
    double y = kLegLength + bob_amp * gait.lift(phi[t]);
    double c = std::cos(heading), s = std::sin(heading);
    for (int64_t j = 0; j < spec.joint_count; ++j) {
      seq.at(t, lay.pos(j) + 0) = x + c * ox[j] + s * oz[j];
      seq.at(t, lay.pos(j) + 1) = y + oy[j];
      seq.at(t, lay.pos(j) + 2) = z - s * ox[j] + c * oz[j];
    }
    // root rotation: yaw about the vertical axis, stored as the first two
    // matrix columns; other joints carry the identity
    for (int64_t j = 0; j < spec.joint_count; ++j) {
      double* r = &seq.at(t, lay.rot(j));
      if (j == 0) {
        r[0] = c;
        r[1] = 0.0;
        r[2] = -s;
      } else {
        r[0] = 1.0;
        r[1] = 0.0;
        r[2] = 0.0;
      }
      r[3] = 0.0;
      r[4] = 1.0;
      r[5] = 0.0;
    }
  }
  // velocities by forward difference; the last frame repeats its predecessor
  for (int64_t t = 0; t < L; ++t) {
    int64_t src = t < L - 1 ? t : L - 2;
    for (int64_t j = 0; j < spec.joint_count; ++j) {
      for (int64_t k = 0; k < 3; ++k) {
        seq.at(t, lay.vel(j) + k) =
            seq.at(src + 1, lay.pos(j) + k) - seq.at(src, lay.pos(j) + k);
      }
    }
  }
  Array labels = foot_contact_labels(seq, spec, kContactHeight, kContactSpeed);
  for (int64_t t = 0; t < L; ++t) {
    for (int64_t slot = 0; slot < 4; ++slot) {
      seq.at(t, lay.contact(slot)) = labels.at(t, slot);
    }
  }
}

}  // namespace

MotionPair generate_synthetic_pair(const SkeletonSpec& spec, Scenario scenario, int64_t length,
                                   uint64_t seed) {
  spec.validate();
  if (spec.joint_count < 5 || spec.foot_joints.size() < 2) {
    throw UsageError("the synthetic generator needs the desk skeleton layout");
  }
  if (length < 8) {
    throw UsageError("sequence length must be at least 8, got " + std::to_string(length));
  }

  uint64_t idx = static_cast<uint64_t>(scenario);
  Rng rng(seed);
  Rng stream = rng.split(0x5ce0a91u + idx);

  int64_t L = length;
  std::vector<double> phi(L);
  for (int64_t t = 0; t < L; ++t) {
    phi[t] = 2.0 * kTwoPi * static_cast<double>(t) / static_cast<double>(L - 1);
  }

  MotionPair pair;
  FrameLayout lay(spec.joint_count);
  pair.a = Array::zeros({L, lay.width()});
  pair.b = Array::zeros({L, lay.width()});
  pair.valid_len = static_cast<uint32_t>(L);
  uint32_t base = static_cast<uint32_t>(4 * idx);
  pair.tokens = {base + 1, base + 2, base + 3};

  double bob = 0.55 + 0.1 * stream.uniform();
  Gait full;                                 // hops in both cycles
  Gait first{0.0, kTwoPi};                   // moves only in the first cycle
  Gait second{kTwoPi, 2.0 * kTwoPi};         // moves only in the second
  Gait none{0.0, 0.0};                       // stands still throughout

  switch (scenario) {
    case Scenario::kApproachHandshake: {
      double g0 = 1.15 + 0.15 * stream.uniform();
      double g1 = 0.25 + 0.05 * stream.uniform();
      double za = 0.1 * (stream.uniform() - 0.5);
      double zb = 0.1 * (stream.uniform() - 0.5);
      fill_person(pair.a, spec, phi, full, bob, [&](double rho, double& x, double& z,
                                                    double& h) {
        x = -g0 + (g0 - g1) * rho;
        z = za;
        h = 0.5 * kPi;
      });
      fill_person(pair.b, spec, phi, full, bob, [&](double rho, double& x, double& z,
                                                    double& h) {
        x = g0 - (g0 - g1) * rho;
        z = zb;
        h = -0.5 * kPi;
      });
      break;
    }
    case Scenario::kCircleAround: {
      double radius = 0.85 + 0.2 * stream.uniform();
      double sweep = (1.2 + 0.4 * stream.uniform()) * kPi;
      double alpha0 = kTwoPi * stream.uniform();
      fill_person(pair.a, spec, phi, full, bob, [&](double rho, double& x, double& z,
                                                    double& h) {
        double alpha = alpha0 + sweep * rho;
        x = radius * std::sin(alpha);
        z = radius * std::cos(alpha);
        h = std::atan2(std::cos(alpha), -std::sin(alpha));
      });
      fill_person(pair.b, spec, phi, none, 0.0, [&](double, double& x, double& z, double& h) {
        x = 0.0;
        z = 0.0;
        h = alpha0;
      });
      break;
    }
    case Scenario::kMirrorDance: {
      double sep = 0.8 + 0.2 * stream.uniform();
      double amp = 0.25 + 0.1 * stream.uniform();
      double stride = 1.0 + 0.4 * stream.uniform();
      double waves = 2.0;
      auto lane = [&](double rho, double side, double& x, double& z, double& h) {
        double w = std::sin(kTwoPi * waves * rho);
        double dw = kTwoPi * waves * std::cos(kTwoPi * waves * rho);
        x = side * (sep + amp * w);
        z = stride * (rho - 0.5);
        h = std::atan2(side * amp * dw, stride);
      };
      fill_person(pair.a, spec, phi, full, bob, [&](double rho, double& x, double& z,
                                                    double& h) { lane(rho, -1.0, x, z, h); });
      fill_person(pair.b, spec, phi, full, bob, [&](double rho, double& x, double& z,
                                                    double& h) { lane(rho, 1.0, x, z, h); });
      break;
    }
    default: {  // push_retreat
      double g = 0.95 + 0.2 * stream.uniform();
      double push = 0.5 + 0.1 * stream.uniform();
      double retreat = 0.55 + 0.15 * stream.uniform();
      fill_person(pair.a, spec, phi, first, bob, [&](double rho, double& x, double& z,
                                                     double& h) {
        x = -0.5 * g + push * rho;
        z = 0.0;
        h = 0.5 * kPi;
      });
      fill_person(pair.b, spec, phi, second, bob, [&](double rho, double& x, double& z,
                                                      double& h) {
        x = 0.5 * g + retreat * rho;
        z = 0.0;
        h = -0.5 * kPi;
      });
      break;
    }
  }
  return pair;
}

Array foot_contact_labels(const Array& seq, const SkeletonSpec& spec, double h_max,
                          double v_max) {
  spec.validate();
  if (spec.foot_joints.empty()) {
    throw ConfigError("skeleton has no foot joints to label");
  }
  if (!(h_max > 0.0) || !(v_max > 0.0)) {
    throw UsageError("contact thresholds must be positive");
  }
  check_rank2(seq, "foot_contact_labels");
  FrameLayout lay(spec.joint_count);
  if (seq.cols() != lay.width()) {
    throw DimensionError("foot_contact_labels: sequence " + shape_to_string(seq.shape) +
                         " does not match frame width [" + std::to_string(lay.width()) + "]");
  }
  Array out = Array::zeros({seq.rows(), 4});
  for (size_t slot = 0; slot < spec.foot_joints.size(); ++slot) {
    int64_t j = spec.foot_joints[slot];
    for (int64_t t = 0; t < seq.rows(); ++t) {
      double height = seq.at(t, lay.pos(j) + 1);
      double vx = seq.at(t, lay.vel(j) + 0);
      double vy = seq.at(t, lay.vel(j) + 1);
      double vz = seq.at(t, lay.vel(j) + 2);
      double speed = std::sqrt(vx * vx + vy * vy + vz * vz);
      out.at(t, static_cast<int64_t>(slot)) = height < h_max && speed < v_max ? 1.0 : 0.0;
    }
  }
  return out;
}

}  // namespace timotion
