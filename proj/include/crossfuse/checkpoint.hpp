#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crossfuse/types.hpp"

namespace crossfuse {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named dense tensors and text blobs.
///
/// File layout: "CFCK", u32 version, u32 section count, then per section a
/// u8 kind (0 tensor, 1 text), a length-prefixed name and either
/// (u64 rows, u64 cols, column-major f64 values) or a length-prefixed text;
/// a trailing CRC-32 of everything before it closes the file.
class Checkpoint {
 public:
  void put(const std::string& name, MatrixXr value);
  void put_text(const std::string& name, std::string text);

  bool has(const std::string& name) const;
  bool has_text(const std::string& name) const;
  /// Throws DataError naming the missing section.
  const MatrixXr& tensor(const std::string& name) const;
  const std::string& text(const std::string& name) const;

  /// Copies a stored tensor into an existing buffer of the same shape.
  void restore(const std::string& name, std::span<Real> target, Index rows, Index cols) const;

  const std::vector<std::pair<std::string, MatrixXr>>& tensors() const { return tensors_; }
  const std::vector<std::pair<std::string, std::string>>& texts() const { return texts_; }

 private:
  std::vector<std::pair<std::string, MatrixXr>> tensors_;
  std::vector<std::pair<std::string, std::string>> texts_;
};

std::string serialize_checkpoint(const Checkpoint& ck, std::uint32_t version = kCheckpointVersion);
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& what);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace crossfuse
