// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include "timotion/errors.hpp"

namespace timotion {

// Little-endian binary file helpers shared by the dataset and checkpoint
// formats. The reader tracks its byte offset so malformed files are reported
// by position.

class BinWriter {
 public:
  BinWriter(const std::string& path) : f_(path, std::ios::binary), path_(path) {
    if (!f_) throw FormatError("cannot open '" + path + "' for writing");
  }
  void bytes(const void* p, size_t n) { f_.write(static_cast<const char*>(p), n); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void u64(uint64_t v) { bytes(&v, 8); }
  void i64(int64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void close() {
    f_.close();
    if (!f_) throw FormatError("failed to write '" + path_ + "'");
  }

 private:
  std::ofstream f_;
  std::string path_;
};

class BinReader {
 public:
  // kind names the format in error messages ("dataset file", "checkpoint").
  BinReader(const std::string& path, std::string kind)
      : f_(path, std::ios::binary), path_(path), kind_(std::move(kind)) {
    if (!f_) throw FormatError("cannot open '" + path + "' for reading");
  }
  void bytes(void* p, size_t n, const char* what) {
    f_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(f_.gcount()) != n) {
      throw FormatError("truncated " + kind_ + " '" + path_ + "': expected " + what +
                        " at byte offset " + std::to_string(off_));
    }
    off_ += n;
  }
  uint32_t u32(const char* what) {
    uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  uint64_t u64(const char* what) {
    uint64_t v;
    bytes(&v, 8, what);
    return v;
  }
  int64_t i64(const char* what) {
    int64_t v;
    bytes(&v, 8, what);
    return v;
  }
  double f64(const char* what) {
    double v;
    bytes(&v, 8, what);
    return v;
  }
  uint64_t offset() const { return off_; }
  bool at_eof() {
    f_.peek();
    return f_.eof();
  }
  [[noreturn]] void fail(const std::string& msg) {
    throw FormatError(kind_ + " '" + path_ + "': " + msg + " at byte offset " +
                      std::to_string(off_));
  }
  // For values already consumed: points at where the bad field began.
  [[noreturn]] void fail_before(const std::string& msg, uint64_t field_bytes) {
    throw FormatError(kind_ + " '" + path_ + "': " + msg + " at byte offset " +
                      std::to_string(off_ - field_bytes));
  }

 private:
  std::ifstream f_;
  std::string path_;
  std::string kind_;
  uint64_t off_ = 0;
};

}  // namespace timotion
