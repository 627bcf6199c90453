// SPDX-License-Identifier: Apache-2.0
#include "saml/serialize.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "saml/errors.hpp"

namespace saml {

namespace {
// Caps guard against reading garbage lengths from corrupt files.
constexpr std::uint64_t kMaxRank = 16;
constexpr std::uint64_t kMaxName = 1 << 16;
}  // namespace

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u64(s.size());
  bytes(s);
}

void ByteReader::need(std::size_t n) const {
  if (buf_.size() - pos_ < n) throw FormatError("unexpected end of data");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(buf_[pos_++]);
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::bytes(std::size_t n) {
  need(n);
  std::string out(buf_.substr(pos_, n));
  pos_ += n;
  return out;
}

std::string ByteReader::str() {
  const auto n = u64();
  if (n > kMaxName) throw FormatError("string length " + std::to_string(n) + " exceeds limit");
  return bytes(static_cast<std::size_t>(n));
}

void write_tensor(ByteWriter& w, std::string_view name, const Tensor& t) {
  w.str(name);
  w.u64(t.rank());
  for (auto e : t.shape()) w.u64(e);
  for (double v : t.data()) w.f64(v);
}

std::pair<std::string, Tensor> read_tensor(ByteReader& r) {
  std::string name = r.str();
  const auto rank = r.u64();
  if (rank > kMaxRank) throw FormatError("tensor '" + name + "': rank " + std::to_string(rank) + " too large");
  Shape shape(rank);
  std::uint64_t numel = 1;
  for (auto& e : shape) {
    e = r.u64();
    numel *= e;
  }
  if (numel * 8 > r.remaining()) throw FormatError("tensor '" + name + "': truncated data");
  std::vector<double> data(numel);
  for (auto& v : data) v = r.f64();
  return {std::move(name), Tensor(std::move(shape), std::move(data))};
}

void write_params(ByteWriter& w, const ParamSet& params) {
  w.u64(params.size());
  for (const auto& [name, t] : params) write_tensor(w, name, t);
}

ParamSet read_params(ByteReader& r) {
  const auto n = r.u64();
  if (n > kMaxName) throw FormatError("parameter count " + std::to_string(n) + " too large");
  ParamSet out;
  for (std::uint64_t i = 0; i < n; ++i) {
    auto [name, t] = read_tensor(r);
    out.add(std::move(name), t.as_variable());
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write to '" + path + "' failed");
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace saml
