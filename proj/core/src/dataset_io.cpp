// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "json.hpp"
#include "timotion/motion.hpp"

namespace timotion {

namespace {

constexpr char kMagic[4] = {'T', 'I', 'M', 'D'};
constexpr uint32_t kVersion = 1;
constexpr int64_t kMaxJoints = 4096;
constexpr uint32_t kMaxTokens = 65536;

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
  if (ds.joint_count < 1 || ds.joint_count > kMaxJoints) {
    throw UsageError("dataset joint count must be in [1, " + std::to_string(kMaxJoints) + "]");
  }
  FrameLayout lay(ds.joint_count);
  BinWriter w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(ds.joint_count));
  w.f64(ds.frame_rate);
  w.u64(ds.pairs.size());
  for (size_t i = 0; i < ds.pairs.size(); ++i) {
    const MotionPair& p = ds.pairs[i];
    if (p.a.rows() != p.b.rows() || p.a.cols() != lay.width() || p.b.cols() != lay.width() ||
        p.a.rows() < 2) {
      throw DimensionError("pair " + std::to_string(i) + ": sequences " +
                           shape_to_string(p.a.shape) + " and " + shape_to_string(p.b.shape) +
                           " do not form an L x " + std::to_string(lay.width()) +
                           " pair with L >= 2");
    }
    if (p.valid_len > p.a.rows()) {
      throw DimensionError("pair " + std::to_string(i) + ": valid length " +
                           std::to_string(p.valid_len) + " exceeds frame count " +
                           std::to_string(p.a.rows()));
    }
    w.u32(static_cast<uint32_t>(p.a.rows()));
    w.u32(p.valid_len);
    w.u32(static_cast<uint32_t>(p.tokens.size()));
    for (uint32_t tok : p.tokens) w.u32(tok);
    w.bytes(p.a.data.data(), p.a.data.size() * sizeof(double));
    w.bytes(p.b.data.data(), p.b.data.size() * sizeof(double));
  }
  w.close();
}

Dataset load_dataset(const std::string& path) {
  BinReader r(path, "dataset file");
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    r.fail_before("bad magic bytes (not a dataset file)", 4);
  }
  uint32_t version = r.u32("version");
  if (version != kVersion) {
    r.fail_before("unsupported version " + std::to_string(version), 4);
  }
  Dataset ds;
  uint32_t joints = r.u32("joint count");
  if (joints < 1 || joints > kMaxJoints) {
    r.fail_before("implausible joint count " + std::to_string(joints), 4);
  }
  ds.joint_count = joints;
  ds.frame_rate = r.f64("frame rate");
  if (!(ds.frame_rate > 0.0)) r.fail_before("frame rate must be positive", 8);
  uint64_t n = r.u64("pair count");
  FrameLayout lay(ds.joint_count);
  ds.pairs.reserve(n);
  for (uint64_t i = 0; i < n; ++i) {
    MotionPair p;
    uint32_t L = r.u32("frame count");
    if (L < 2) r.fail_before("pair " + std::to_string(i) + " has frame count " +
                             std::to_string(L) + " (need at least 2)", 4);
    p.valid_len = r.u32("valid length");
    if (p.valid_len > L) {
      r.fail_before("pair " + std::to_string(i) + " valid length " +
                    std::to_string(p.valid_len) + " exceeds frame count " + std::to_string(L), 4);
    }
    uint32_t ntok = r.u32("token count");
    if (ntok > kMaxTokens) {
      r.fail_before("pair " + std::to_string(i) + " has implausible token count " +
                    std::to_string(ntok), 4);
    }
    p.tokens.resize(ntok);
    for (uint32_t k = 0; k < ntok; ++k) p.tokens[k] = r.u32("token");
    p.a = Array::zeros({static_cast<int64_t>(L), lay.width()});
    p.b = Array::zeros({static_cast<int64_t>(L), lay.width()});
    r.bytes(p.a.data.data(), p.a.data.size() * sizeof(double), "first person frames");
    r.bytes(p.b.data.data(), p.b.data.size() * sizeof(double), "second person frames");
    ds.pairs.push_back(std::move(p));
  }
  if (!r.at_eof()) r.fail("trailing data after the last pair");
  return ds;
}

void write_manifest(const std::string& path, const Dataset& ds,
                    const std::vector<std::string>& scenarios, uint64_t seed) {
  nlohmann::json j;
  j["format"] = "TIMD/1";
  j["joint_count"] = ds.joint_count;
  j["frame_rate"] = ds.frame_rate;
  j["pair_count"] = ds.pairs.size();
  j["scenarios"] = scenarios;
  j["seed"] = seed;
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f << j.dump(2) << "\n";
  if (!f) throw FormatError("failed to write '" + path + "'");
}

}  // namespace timotion
