#include "crossfuse/graph.hpp"

#include "crossfuse/binary_io.hpp"

namespace crossfuse {

namespace {
constexpr std::string_view kSparseMagic = "CFSP";
}

void save_sparse(const std::string& path, const SparseXr& S_in) {
  SparseXr S = S_in;
  S.makeCompressed();
  io::ByteWriter w;
  w.put_bytes(kSparseMagic);
  w.put_u32(kSparseFormatVersion);
  w.put_u64(static_cast<std::uint64_t>(S.rows()));
  w.put_u64(static_cast<std::uint64_t>(S.cols()));
  w.put_u64(static_cast<std::uint64_t>(S.nonZeros()));
  for (Index r = 0; r <= S.rows(); ++r) w.put_i64(S.outerIndexPtr()[r]);
  for (Index k = 0; k < S.nonZeros(); ++k) w.put_i64(S.innerIndexPtr()[k]);
  for (Index k = 0; k < S.nonZeros(); ++k) w.put_f64(S.valuePtr()[k]);
  io::write_file(path, w.bytes());
}

SparseXr load_sparse(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, path);
  if (r.get_bytes(4) != kSparseMagic) throw DataError(path + ": not a sparse matrix file");
  if (auto v = r.get_u32(); v != kSparseFormatVersion)
    throw VersionMismatch(path + ": sparse format version " + std::to_string(v) + ", expected " +
                          std::to_string(kSparseFormatVersion));
  const auto rows = static_cast<Index>(r.get_u64());
  const auto cols = static_cast<Index>(r.get_u64());
  const auto nnz = static_cast<Index>(r.get_u64());
  if (rows < 0 || cols < 0 || nnz < 0 ||
      r.remaining() != static_cast<std::size_t>((rows + 1) * 8 + nnz * 16))
    throw DataError(path + ": size does not match header");
  std::vector<Index> offsets(static_cast<std::size_t>(rows + 1));
  for (auto& o : offsets) o = r.get_i64();
  std::vector<Eigen::Triplet<Real>> entries;
  entries.reserve(static_cast<std::size_t>(nnz));
  std::vector<Index> indices(static_cast<std::size_t>(nnz));
  for (auto& c : indices) c = r.get_i64();
  if (offsets.front() != 0 || offsets.back() != nnz) throw DataError(path + ": corrupt offsets");
  for (Index row = 0; row < rows; ++row) {
    const auto lo = offsets[static_cast<std::size_t>(row)];
    const auto hi = offsets[static_cast<std::size_t>(row + 1)];
    if (lo > hi) throw DataError(path + ": corrupt offsets");
    for (Index k = lo; k < hi; ++k) {
      const auto c = indices[static_cast<std::size_t>(k)];
      if (c < 0 || c >= cols) throw DataError(path + ": column index out of range");
      entries.emplace_back(row, c, 0.0);
    }
  }
  for (Index k = 0; k < nnz; ++k) {
    const auto row_entry = entries[static_cast<std::size_t>(k)];
    entries[static_cast<std::size_t>(k)] =
        Eigen::Triplet<Real>(row_entry.row(), row_entry.col(), r.get_f64());
  }
  SparseXr S(rows, cols);
  S.setFromTriplets(entries.begin(), entries.end());
  S.makeCompressed();
  if (S.nonZeros() != nnz || !csr_invariants_hold(S))
    throw DataError(path + ": stored matrix violates CSR invariants");
  return S;
}

}  // namespace crossfuse
