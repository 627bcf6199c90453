// SPDX-License-Identifier: Apache-2.0
//
// Little-endian binary records shared by the dataset and checkpoint formats.
//
// Tensor record layout:
//   u64 name_length | name bytes | u64 rank | rank x u64 extents |
//   numel x f64 values
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "saml/param_set.hpp"
#include "saml/tensor.hpp"

namespace saml {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void bytes(std::string_view s) { buf_.append(s); }
  void str(std::string_view s);

  const std::string& buffer() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view buf) : buf_(buf) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64();
  std::string bytes(std::size_t n);
  std::string str();

  bool done() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  std::string_view buf_;
  std::size_t pos_ = 0;
};

void write_tensor(ByteWriter& w, std::string_view name, const Tensor& t);
// Returns the record's name and a constant tensor.
std::pair<std::string, Tensor> read_tensor(ByteReader& r);

void write_params(ByteWriter& w, const ParamSet& params);
// Leaves come back as graph-linked variables so they can be trained further.
ParamSet read_params(ByteReader& r);

// 64-bit FNV-1a, used for config and parameter fingerprints.
std::uint64_t fnv1a(std::string_view bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace saml
