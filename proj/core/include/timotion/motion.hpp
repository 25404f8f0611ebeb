// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "timotion/array.hpp"
#include "timotion/errors.hpp"
#include "timotion/rng.hpp"

namespace timotion {

// Kinematic tree plus the metadata the losses need. Joint 0 is the root and
// is its own parent; every other joint's parent has a smaller index.
struct SkeletonSpec {
  int64_t joint_count = 0;
  std::vector<int64_t> parent;
  std::vector<double> bone_length;  // meters, entry 0 unused
  std::vector<int64_t> foot_joints;  // up to 4

  void validate() const;
};

// The 5-joint desk skeleton: root, two hips, two feet. Larger counts add a
// spine chain above the root.
SkeletonSpec desk_skeleton(int64_t joint_count = 5);

// Column layout of one motion frame: global positions, global velocities
// (m/frame), 6D local rotations, then four foot-contact slots.
struct FrameLayout {
  int64_t joints = 0;

  explicit FrameLayout(int64_t joint_count) : joints(joint_count) {}
  int64_t pos(int64_t j) const { return 3 * j; }
  int64_t vel(int64_t j) const { return 3 * joints + 3 * j; }
  int64_t rot(int64_t j) const { return 6 * joints + 6 * j; }
  int64_t contact(int64_t slot) const { return 12 * joints + slot; }
  int64_t width() const { return 12 * joints + 4; }
};

int64_t frame_dim(const SkeletonSpec& spec);

enum class Scenario { kApproachHandshake, kCircleAround, kMirrorDance, kPushRetreat };

Scenario parse_scenario(const std::string& name);
std::string scenario_name(Scenario s);
std::vector<Scenario> all_scenarios();

// One two-person clip. Frames are rows; both sequences share a length.
struct MotionPair {
  Array a, b;  // L x frame_dim
  uint32_t valid_len = 0;
  std::vector<uint32_t> tokens;
};

struct Dataset {
  int64_t joint_count = 0;
  double frame_rate = 20.0;
  std::vector<MotionPair> pairs;
};

// Deterministic analytic two-person clip. Bodies translate and yaw rigidly
// and only move while airborne in a hop gait, so bone lengths are exact and
// feet sit perfectly still at ground height during stance.
MotionPair generate_synthetic_pair(const SkeletonSpec& spec, Scenario scenario, int64_t length,
                                   uint64_t seed);

// Threshold rule used both for dataset labels and by the foot-skate loss:
// contact when the foot joint is low and slow.
Array foot_contact_labels(const Array& seq, const SkeletonSpec& spec, double h_max = 0.05,
                          double v_max = 0.02);

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

// Human-readable sidecar describing how a dataset file was produced.
void write_manifest(const std::string& path, const Dataset& ds,
                    const std::vector<std::string>& scenarios, uint64_t seed);

}  // namespace timotion
