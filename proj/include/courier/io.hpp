// Copyright 2026 The Courier Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "courier/common.hpp"

namespace courier::io {

// Little-endian binary writer for checkpoint and replay-spill files. Doubles
// are written as raw IEEE-754 bytes so files round-trip bit exactly.
class BinWriter {
 public:
  explicit BinWriter(const std::string& path)
      : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for writing: " + path);
  }

  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void i32(std::int32_t v) { raw(&v, 4); }
  void i64(std::int64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }

  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

  void mat(const Eigen::MatrixXd& m) {
    i64(m.rows());
    i64(m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }

  void raw(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p),
               static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed");
  }

  void close() {
    out_.close();
    if (!out_) throw IoError("close failed");
  }

 private:
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path)
      : in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open for reading: " + path);
  }

  std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
  std::int32_t i32() { std::int32_t v; raw(&v, 4); return v; }
  std::int64_t i64() { std::int64_t v; raw(&v, 8); return v; }
  double f64() { double v; raw(&v, 8); return v; }

  std::string str() {
    std::uint32_t n = u32();
    std::string s(n, '\0');
    if (n) raw(s.data(), n);
    return s;
  }

  Eigen::MatrixXd mat() {
    std::int64_t r = i64(), c = i64();
    if (r < 0 || c < 0 || r > (1 << 28) || c > (1 << 28))
      throw IoError("corrupt matrix header");
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = f64();
    return m;
  }

  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw IoError("unexpected end of file");
  }

 private:
  std::ifstream in_;
};

}  // namespace courier::io
