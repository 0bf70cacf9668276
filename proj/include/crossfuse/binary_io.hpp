#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "crossfuse/error.hpp"
#include "crossfuse/types.hpp"

namespace crossfuse::io {

/// Append-only little-endian byte sink.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void put_u32(std::uint32_t v) { put_le(v); }
  void put_u64(std::uint64_t v) { put_le(v); }
  void put_i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v)); }
  void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void put_bytes(std::string_view s) { bytes_.append(s.data(), s.size()); }
  void put_string(std::string_view s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }

  const std::string& bytes() const { return bytes_; }
  std::string& bytes() { return bytes_; }

 private:
  template <typename U>
  void put_le(U v) {
    for (std::size_t k = 0; k < sizeof(U); ++k) {
      bytes_.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
    }
  }

  std::string bytes_;
};

/// Bounds-checked little-endian reader. Running past the end throws
/// DataError naming `what`.
class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  std::uint8_t get_u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t get_u32() { return get_le<std::uint32_t>(); }
  std::uint64_t get_u64() { return get_le<std::uint64_t>(); }
  std::int64_t get_i64() { return static_cast<std::int64_t>(get_le<std::uint64_t>()); }
  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::string_view get_bytes(std::size_t n) { return take(n); }
  std::string get_string() {
    auto n = get_u32();
    return std::string(take(n));
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::string_view take(std::size_t n) {
    if (n > remaining()) throw DataError(what_ + ": truncated file");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename U>
  U get_le() {
    auto raw = take(sizeof(U));
    U v = 0;
    for (std::size_t k = 0; k < sizeof(U); ++k) {
      v |= static_cast<U>(static_cast<unsigned char>(raw[k])) << (8 * k);
    }
    return v;
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

std::uint32_t crc32(std::string_view bytes);

/// Dense real matrix file: u64 rows, u64 cols, then row-major
/// little-endian 64-bit reals.
void save_dense(const std::string& path, const MatrixXr& m);
MatrixXr load_dense(const std::string& path);

}  // namespace crossfuse::io
