#pragma once

// Flat binary archive of named tensors plus a free-form metadata string.
//
// Layout (little-endian):
//   "DLCK" u32 version
//   u64 metadata length, metadata bytes
//   u64 tensor count, then per tensor:
//     u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64 (row-major)

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "deglink/numerics.hpp"

namespace deglink {

struct TensorArchive {
  std::string metadata;
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_archive(const std::string& path, const TensorArchive& archive);
TensorArchive read_archive(const std::string& path);

std::string encode_archive(const TensorArchive& archive);
TensorArchive decode_archive(const std::string& bytes);

}  // namespace deglink
