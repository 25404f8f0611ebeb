// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "test_helpers.hpp"
#include "timotion/motion.hpp"

using namespace timotion;
using tt::message_mentions;

namespace {

std::string temp_path(const std::string& name) { return "/tmp/timotion_test_" + name; }

double root_distance(const MotionPair& p, int64_t t, const FrameLayout& lay) {
  double dx = p.a.at(t, lay.pos(0) + 0) - p.b.at(t, lay.pos(0) + 0);
  double dy = p.a.at(t, lay.pos(0) + 1) - p.b.at(t, lay.pos(0) + 1);
  double dz = p.a.at(t, lay.pos(0) + 2) - p.b.at(t, lay.pos(0) + 2);
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void patch_file(const std::string& path, uint64_t offset, const void* bytes, size_t n) {
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  REQUIRE(f.good());
  f.seekp(static_cast<std::streamoff>(offset));
  f.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
}

void truncate_file(const std::string& path, uint64_t keep) {
  std::ifstream in(path, std::ios::binary);
  std::vector<char> buf(keep);
  in.read(buf.data(), static_cast<std::streamsize>(keep));
  REQUIRE(static_cast<uint64_t>(in.gcount()) == keep);
  in.close();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(buf.data(), static_cast<std::streamsize>(keep));
}

}  // namespace

TEST_CASE("frame width arithmetic") {
  CHECK(frame_dim(desk_skeleton(22)) == 268);
  CHECK(frame_dim(desk_skeleton(5)) == 64);
  SkeletonSpec one;
  one.joint_count = 1;
  one.parent = {0};
  one.bone_length = {0.0};
  CHECK(frame_dim(one) == 16);
}

TEST_CASE("generator is deterministic in everything but the seed") {
  SkeletonSpec spec = desk_skeleton();
  MotionPair p1 = generate_synthetic_pair(spec, Scenario::kMirrorDance, 32, 7);
  MotionPair p2 = generate_synthetic_pair(spec, Scenario::kMirrorDance, 32, 7);
  CHECK(max_abs_diff(p1.a, p2.a) == 0.0);
  CHECK(max_abs_diff(p1.b, p2.b) == 0.0);
  CHECK(p1.tokens == p2.tokens);
  CHECK(p1.valid_len == 32);

  MotionPair p3 = generate_synthetic_pair(spec, Scenario::kMirrorDance, 32, 8);
  CHECK(max_abs_diff(p1.a, p3.a) > 0.0);
}

TEST_CASE("every scenario stores forward-difference velocities") {
  SkeletonSpec spec = desk_skeleton();
  FrameLayout lay(spec.joint_count);
  for (Scenario s : all_scenarios()) {
    CAPTURE(scenario_name(s));
    MotionPair p = generate_synthetic_pair(spec, s, 16, 11);
    for (const Array* seq : {&p.a, &p.b}) {
      for (int64_t t = 0; t + 1 < seq->rows(); ++t) {
        for (int64_t j = 0; j < spec.joint_count; ++j) {
          for (int64_t k = 0; k < 3; ++k) {
            double diff = seq->at(t + 1, lay.pos(j) + k) - seq->at(t, lay.pos(j) + k);
            CHECK(seq->at(t, lay.vel(j) + k) == diff);
          }
        }
      }
      // the final frame repeats its predecessor's velocity
      for (int64_t j = 0; j < spec.joint_count; ++j) {
        for (int64_t k = 0; k < 3; ++k) {
          CHECK(seq->at(15, lay.vel(j) + k) == seq->at(14, lay.vel(j) + k));
        }
      }
    }
  }
}

TEST_CASE("bone lengths are exact for every scenario and frame") {
  SkeletonSpec spec = desk_skeleton(6);
  FrameLayout lay(spec.joint_count);
  for (Scenario s : all_scenarios()) {
    CAPTURE(scenario_name(s));
    MotionPair p = generate_synthetic_pair(spec, s, 24, 5);
    for (const Array* seq : {&p.a, &p.b}) {
      for (int64_t t = 0; t < seq->rows(); ++t) {
        for (int64_t j = 1; j < spec.joint_count; ++j) {
          int64_t par = spec.parent[j];
          double dx = seq->at(t, lay.pos(j) + 0) - seq->at(t, lay.pos(par) + 0);
          double dy = seq->at(t, lay.pos(j) + 1) - seq->at(t, lay.pos(par) + 1);
          double dz = seq->at(t, lay.pos(j) + 2) - seq->at(t, lay.pos(par) + 2);
          CHECK(std::fabs(std::sqrt(dx * dx + dy * dy + dz * dz) - spec.bone_length[j]) <
                1e-10);
        }
      }
    }
  }
}

TEST_CASE("handshake pairs meet in the final quarter") {
  SkeletonSpec spec = desk_skeleton();
  FrameLayout lay(spec.joint_count);
  for (int64_t L : {32, 64}) {
    for (uint64_t seed : {1ull, 9ull, 23ull}) {
      MotionPair p = generate_synthetic_pair(spec, Scenario::kApproachHandshake, L, seed);
      double best = root_distance(p, 0, lay);
      int64_t argmin = 0;
      for (int64_t t = 1; t < L; ++t) {
        double d = root_distance(p, t, lay);
        if (d < best - 1e-12) {
          best = d;
          argmin = t;
        }
      }
      CHECK(argmin >= (3 * L) / 4);
      CHECK(best < root_distance(p, 0, lay));
    }
  }
}

TEST_CASE("contact labels follow the height and speed thresholds") {
  SkeletonSpec spec = desk_skeleton();
  // give the spec four labeled "feet" so all slots are exercised
  spec.foot_joints = {1, 2, 3, 4};
  FrameLayout lay(spec.joint_count);

  SUBCASE("static sequence at ground height is all contact") {
    Array seq = Array::zeros({6, lay.width()});
    Array labels = foot_contact_labels(seq, spec);
    for (double v : labels.data) CHECK(v == 1.0);
  }
  SUBCASE("feet a meter up never touch") {
    Array seq = Array::zeros({6, lay.width()});
    for (int64_t t = 0; t < 6; ++t) {
      for (int64_t j : spec.foot_joints) seq.at(t, lay.pos(j) + 1) = 1.0;
    }
    Array labels = foot_contact_labels(seq, spec);
    for (double v : labels.data) CHECK(v == 0.0);
  }
  SUBCASE("fast feet at ground height do not count as planted") {
    Array seq = Array::zeros({6, lay.width()});
    for (int64_t t = 0; t < 6; ++t) {
      for (int64_t j : spec.foot_joints) seq.at(t, lay.vel(j) + 0) = 0.5;
    }
    Array labels = foot_contact_labels(seq, spec);
    for (double v : labels.data) CHECK(v == 0.0);
  }
}

TEST_CASE("hop gait alternates contact with a near-half duty cycle") {
  SkeletonSpec spec = desk_skeleton();
  FrameLayout lay(spec.joint_count);
  MotionPair p = generate_synthetic_pair(spec, Scenario::kApproachHandshake, 64, 3);

  // both feet hop together, so the two contact slots agree
  for (int64_t t = 0; t < 64; ++t) {
    CHECK(p.a.at(t, lay.contact(0)) == p.a.at(t, lay.contact(1)));
    CHECK(p.a.at(t, lay.contact(2)) == 0.0);
  }
  int64_t planted = 0, transitions = 0;
  for (int64_t t = 0; t < 64; ++t) {
    planted += p.a.at(t, lay.contact(0)) == 1.0 ? 1 : 0;
    if (t > 0 && p.a.at(t, lay.contact(0)) != p.a.at(t - 1, lay.contact(0))) ++transitions;
  }
  // the gait spends half of each cycle planted; discretization shifts the
  // measured duty by at most a frame or two per boundary
  double duty = static_cast<double>(planted) / 64.0;
  CHECK(duty > 0.45);
  CHECK(duty < 0.55);
  CHECK(transitions >= 3);
}

TEST_CASE("stationary partner stays planted the whole clip") {
  SkeletonSpec spec = desk_skeleton();
  FrameLayout lay(spec.joint_count);
  MotionPair p = generate_synthetic_pair(spec, Scenario::kCircleAround, 32, 17);
  for (int64_t t = 0; t < 32; ++t) {
    CHECK(p.b.at(t, lay.contact(0)) == 1.0);
    CHECK(p.b.at(t, lay.contact(1)) == 1.0);
    for (int64_t j = 0; j < spec.joint_count; ++j) {
      for (int64_t k = 0; k < 3; ++k) CHECK(p.b.at(t, lay.vel(j) + k) == 0.0);
    }
  }
}

TEST_CASE("mirror dance is an exact reflection at the root") {
  SkeletonSpec spec = desk_skeleton();
  FrameLayout lay(spec.joint_count);
  MotionPair p = generate_synthetic_pair(spec, Scenario::kMirrorDance, 32, 29);
  for (int64_t t = 0; t < 32; ++t) {
    CHECK(p.a.at(t, lay.pos(0) + 0) == -p.b.at(t, lay.pos(0) + 0));
    CHECK(p.a.at(t, lay.pos(0) + 1) == p.b.at(t, lay.pos(0) + 1));
    CHECK(p.a.at(t, lay.pos(0) + 2) == p.b.at(t, lay.pos(0) + 2));
  }
}

TEST_CASE("stored rotations are orthonormal column pairs") {
  SkeletonSpec spec = desk_skeleton();
  FrameLayout lay(spec.joint_count);
  MotionPair p = generate_synthetic_pair(spec, Scenario::kCircleAround, 16, 2);
  for (int64_t t = 0; t < 16; ++t) {
    for (int64_t j = 0; j < spec.joint_count; ++j) {
      const double* r = &p.a.at(t, lay.rot(j));
      double n1 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
      double n2 = r[3] * r[3] + r[4] * r[4] + r[5] * r[5];
      double dot = r[0] * r[3] + r[1] * r[4] + r[2] * r[5];
      CHECK(std::fabs(n1 - 1.0) < 1e-12);
      CHECK(std::fabs(n2 - 1.0) < 1e-12);
      CHECK(std::fabs(dot) < 1e-12);
    }
  }
}

TEST_CASE("stored contacts match the labeling rule after a round trip") {
  SkeletonSpec spec = desk_skeleton();
  FrameLayout lay(spec.joint_count);
  Dataset ds;
  ds.joint_count = spec.joint_count;
  for (Scenario s : all_scenarios()) {
    ds.pairs.push_back(generate_synthetic_pair(spec, s, 16, 31));
  }
  std::string path = temp_path("contacts.timd");
  save_dataset(path, ds);
  Dataset back = load_dataset(path);
  for (const MotionPair& p : back.pairs) {
    Array labels = foot_contact_labels(p.a, spec);
    for (int64_t t = 0; t < p.a.rows(); ++t) {
      for (int64_t slot = 0; slot < 4; ++slot) {
        CHECK(p.a.at(t, lay.contact(slot)) == labels.at(t, slot));
      }
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("dataset files round-trip bit for bit") {
  Rng rng(55);
  Dataset ds;
  ds.joint_count = 5;
  ds.frame_rate = 20.0;
  FrameLayout lay(5);
  for (int i = 0; i < 10; ++i) {
    MotionPair p;
    int64_t L = 8 + rng.uniform_int(9);
    p.a = tt::random_array({L, lay.width()}, rng);
    p.b = tt::random_array({L, lay.width()}, rng);
    p.valid_len = static_cast<uint32_t>(2 + rng.uniform_int(L - 1));
    int ntok = rng.uniform_int(5);
    for (int k = 0; k < ntok; ++k) p.tokens.push_back(static_cast<uint32_t>(rng.uniform_int(16)));
    ds.pairs.push_back(std::move(p));
  }
  std::string path = temp_path("roundtrip.timd");
  save_dataset(path, ds);
  Dataset back = load_dataset(path);
  REQUIRE(back.pairs.size() == ds.pairs.size());
  CHECK(back.joint_count == 5);
  CHECK(back.frame_rate == 20.0);
  for (size_t i = 0; i < ds.pairs.size(); ++i) {
    CHECK(max_abs_diff(back.pairs[i].a, ds.pairs[i].a) == 0.0);
    CHECK(max_abs_diff(back.pairs[i].b, ds.pairs[i].b) == 0.0);
    CHECK(back.pairs[i].valid_len == ds.pairs[i].valid_len);
    CHECK(back.pairs[i].tokens == ds.pairs[i].tokens);
  }
  std::remove(path.c_str());
}

TEST_CASE("empty dataset files are valid") {
  Dataset ds;
  ds.joint_count = 5;
  std::string path = temp_path("empty.timd");
  save_dataset(path, ds);
  Dataset back = load_dataset(path);
  CHECK(back.pairs.empty());
  CHECK(back.joint_count == 5);
  std::remove(path.c_str());
}

TEST_CASE("malformed dataset files fail with an offset") {
  SkeletonSpec spec = desk_skeleton();
  Dataset ds;
  ds.joint_count = spec.joint_count;
  ds.pairs.push_back(generate_synthetic_pair(spec, Scenario::kPushRetreat, 8, 1));
  std::string path = temp_path("broken.timd");

  SUBCASE("corrupted magic") {
    save_dataset(path, ds);
    patch_file(path, 0, "XIMD", 4);
    try {
      load_dataset(path);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(message_mentions(e, "magic", "offset 0"));
    }
  }
  SUBCASE("unsupported version") {
    save_dataset(path, ds);
    uint32_t v = 9;
    patch_file(path, 4, &v, 4);
    try {
      load_dataset(path);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(message_mentions(e, "version 9", "offset 4"));
    }
  }
  SUBCASE("truncated frames") {
    save_dataset(path, ds);
    truncate_file(path, 64);
    try {
      load_dataset(path);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(message_mentions(e, "truncated", "offset"));
    }
  }
  SUBCASE("trailing bytes") {
    save_dataset(path, ds);
    std::ofstream f(path, std::ios::binary | std::ios::app);
    f.write("junk", 4);
    f.close();
    try {
      load_dataset(path);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(message_mentions(e, "trailing", "offset"));
    }
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_dataset(temp_path("does_not_exist.timd")), FormatError);
  }
  std::remove(path.c_str());
}

TEST_CASE("manifest records provenance without timestamps") {
  SkeletonSpec spec = desk_skeleton();
  Dataset ds;
  ds.joint_count = spec.joint_count;
  ds.pairs.push_back(generate_synthetic_pair(spec, Scenario::kMirrorDance, 8, 4));
  std::string path = temp_path("manifest.json");
  write_manifest(path, ds, {"mirror_dance"}, 4);
  std::ifstream f(path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"TIMD/1\"") != std::string::npos);
  CHECK(text.find("\"mirror_dance\"") != std::string::npos);
  CHECK(text.find("\"seed\": 4") != std::string::npos);
  CHECK(text.find("\"pair_count\": 1") != std::string::npos);
  CHECK(text.find("time\":") == std::string::npos);

  // identical inputs must produce identical bytes
  std::string path2 = temp_path("manifest2.json");
  write_manifest(path2, ds, {"mirror_dance"}, 4);
  std::ifstream f2(path2);
  std::string text2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(text == text2);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("generator and labeling reject bad arguments") {
  SkeletonSpec spec = desk_skeleton();
  CHECK_THROWS_AS(generate_synthetic_pair(spec, Scenario::kMirrorDance, 7, 1), UsageError);
  CHECK_THROWS_AS(parse_scenario("waltz"), UsageError);

  Array seq = Array::zeros({4, frame_dim(spec)});
  CHECK_THROWS_AS(foot_contact_labels(seq, spec, 0.0, 0.02), UsageError);
  CHECK_THROWS_AS(foot_contact_labels(seq, spec, 0.05, -1.0), UsageError);

  SkeletonSpec footless = spec;
  footless.foot_joints.clear();
  CHECK_THROWS_AS(foot_contact_labels(seq, footless), ConfigError);

  Array narrow = Array::zeros({4, 10});
  try {
    foot_contact_labels(narrow, spec);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    CHECK(message_mentions(e, "[4, 10]", "[64]"));
  }

  SkeletonSpec bad = spec;
  bad.parent[3] = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
