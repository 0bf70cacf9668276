#include "crossfuse/binary_io.hpp"

#include <fstream>
#include <sstream>

#include <zlib.h>

namespace crossfuse::io {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

std::uint32_t crc32(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  const char* p = bytes.data();
  std::size_t left = bytes.size();
  while (left > 0) {
    auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(p), chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void save_dense(const std::string& path, const MatrixXr& m) {
  ByteWriter w;
  w.put_u64(static_cast<std::uint64_t>(m.rows()));
  w.put_u64(static_cast<std::uint64_t>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) w.put_f64(m(r, c));
  write_file(path, w.bytes());
}

MatrixXr load_dense(const std::string& path) {
  auto bytes = read_file(path);
  ByteReader r(bytes, path);
  auto rows = r.get_u64();
  auto cols = r.get_u64();
  if (rows != 0 && cols > r.remaining() / 8 / rows) throw DataError(path + ": truncated file");
  if (r.remaining() != rows * cols * 8) throw DataError(path + ": size does not match header");
  MatrixXr m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = r.get_f64();
  return m;
}

}  // namespace crossfuse::io
