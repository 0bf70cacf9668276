#include "crossfuse/checkpoint.hpp"

#include <algorithm>
#include <cstring>

#include "crossfuse/binary_io.hpp"
#include "crossfuse/error.hpp"

namespace crossfuse {

namespace {

constexpr std::string_view kMagic = "CFCK";

template <typename Vec>
auto find_named(Vec& v, const std::string& name) {
  return std::find_if(v.begin(), v.end(), [&](const auto& e) { return e.first == name; });
}

}  // namespace

void Checkpoint::put(const std::string& name, MatrixXr value) {
  if (auto it = find_named(tensors_, name); it != tensors_.end())
    it->second = std::move(value);
  else
    tensors_.emplace_back(name, std::move(value));
}

void Checkpoint::put_text(const std::string& name, std::string text) {
  if (auto it = find_named(texts_, name); it != texts_.end())
    it->second = std::move(text);
  else
    texts_.emplace_back(name, std::move(text));
}

bool Checkpoint::has(const std::string& name) const {
  return find_named(tensors_, name) != tensors_.end();
}

bool Checkpoint::has_text(const std::string& name) const {
  return find_named(texts_, name) != texts_.end();
}

const MatrixXr& Checkpoint::tensor(const std::string& name) const {
  auto it = find_named(tensors_, name);
  if (it == tensors_.end()) throw DataError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

const std::string& Checkpoint::text(const std::string& name) const {
  auto it = find_named(texts_, name);
  if (it == texts_.end()) throw DataError("checkpoint has no text section '" + name + "'");
  return it->second;
}

void Checkpoint::restore(const std::string& name, std::span<Real> target, Index rows,
                         Index cols) const {
  const auto& t = tensor(name);
  if (t.rows() != rows || t.cols() != cols)
    throw DimensionError("checkpoint tensor '" + name + "' is " + std::to_string(t.rows()) + "x" +
                         std::to_string(t.cols()) + ", expected " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  std::memcpy(target.data(), t.data(), target.size() * sizeof(Real));
}

std::string serialize_checkpoint(const Checkpoint& ck, std::uint32_t version) {
  io::ByteWriter w;
  w.put_bytes(kMagic);
  w.put_u32(version);
  w.put_u32(static_cast<std::uint32_t>(ck.tensors().size() + ck.texts().size()));
  for (const auto& [name, m] : ck.tensors()) {
    w.put_u8(0);
    w.put_string(name);
    w.put_u64(static_cast<std::uint64_t>(m.rows()));
    w.put_u64(static_cast<std::uint64_t>(m.cols()));
    for (Index k = 0; k < m.size(); ++k) w.put_f64(m.data()[k]);
  }
  for (const auto& [name, text] : ck.texts()) {
    w.put_u8(1);
    w.put_string(name);
    w.put_string(text);
  }
  w.put_u32(io::crc32(w.bytes()));
  return w.bytes();
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& what) {
  io::ByteReader r(bytes, what);
  if (r.get_bytes(4) != kMagic) throw DataError(what + ": not a checkpoint file");
  if (auto v = r.get_u32(); v != kCheckpointVersion)
    throw VersionMismatch(what + ": checkpoint version " + std::to_string(v) + ", expected " +
                          std::to_string(kCheckpointVersion));
  if (bytes.size() < 12) throw ChecksumError(what + ": truncated checkpoint");
  const std::string_view body(bytes.data(), bytes.size() - 4);
  io::ByteReader tail(std::string_view(bytes).substr(bytes.size() - 4), what);
  if (tail.get_u32() != io::crc32(body)) throw ChecksumError(what + ": checksum mismatch");

  io::ByteReader in(body, what);
  in.get_bytes(8);
  Checkpoint ck;
  const auto sections = in.get_u32();
  for (std::uint32_t s = 0; s < sections; ++s) {
    const auto kind = in.get_u8();
    auto name = in.get_string();
    if (kind == 0) {
      const auto rows = in.get_u64();
      const auto cols = in.get_u64();
      if (cols != 0 && rows > in.remaining() / 8 / cols)
        throw DataError(what + ": tensor '" + name + "' exceeds the file");
      MatrixXr m(static_cast<Index>(rows), static_cast<Index>(cols));
      for (Index k = 0; k < m.size(); ++k) m.data()[k] = in.get_f64();
      ck.put(name, std::move(m));
    } else if (kind == 1) {
      ck.put_text(name, in.get_string());
    } else {
      throw DataError(what + ": unknown section kind " + std::to_string(kind));
    }
  }
  if (in.remaining() != 0) throw DataError(what + ": trailing bytes after last section");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  io::write_file(path, serialize_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::string& path) {
  return parse_checkpoint(io::read_file(path), path);
}

}  // namespace crossfuse
