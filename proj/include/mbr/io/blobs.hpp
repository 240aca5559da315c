#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "mbr/core/common.hpp"

namespace mbr::io {

// A named-tensor container: one JSON metadata block plus ordered float32
// tensors. Used for checkpoints and pretrained backbone weights.
struct NamedBlobs {
  nlohmann::json meta;
  std::vector<std::pair<std::string, std::vector<float>>> tensors;

  const std::vector<float>* find(const std::string& name) const {
    for (const auto& [n, v] : tensors)
      if (n == name) return &v;
    return nullptr;
  }
  void add(const std::string& name, std::vector<float> v) {
    tensors.emplace_back(name, std::move(v));
  }
};

// Atomic write (temp file + rename).
void save_blobs(const std::string& path, const NamedBlobs& blobs);
NamedBlobs load_blobs(const std::string& path);

// Flat embedding container: header (row count, dim, dtype) + row-major
// float32 payload. Labels travel in a CSV sidecar handled by the dataset
// module.
void save_embedding_matrix(const std::string& path, const float* data, std::uint64_t rows,
                           std::uint64_t dim);
void load_embedding_matrix(const std::string& path, std::vector<float>& data,
                           std::uint64_t& rows, std::uint64_t& dim);

}  // namespace mbr::io
