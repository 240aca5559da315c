#pragma once

#include <string>

#include "mbr/data/manifest.hpp"

namespace mbr::data {

// Desk-scale synthetic fixture: each identity is a distinctly colored and
// patterned vehicle-like shape, rendered under per-camera tint and
// view-dependent orientation, so the retrieval task is learnable in minutes.
struct SynthConfig {
  Index n_ids = 10;
  Index n_cams = 4;
  Index n_views = 2;
  Index imgs_per_id = 8;  // train images per identity
  std::uint64_t seed = 0;
  Index size = 256;
  Index query_per_id = 2;
  Index gallery_per_id = 3;

  void validate() const {
    if (n_ids < 2) fail_validation("synthetic dataset needs at least 2 identities");
    if (n_cams < 2) fail_validation("synthetic dataset needs at least 2 cameras");
    if (n_views < 1 || imgs_per_id < 1 || size < 32)
      fail_validation("bad synthetic dataset configuration");
  }
};

// Writes PNGs under root/{train,query,gallery}/ plus CSV manifests
// root/{train,query,gallery}.csv; byte-identical for identical configs.
DatasetTriplet synth_dataset(const std::string& root, const SynthConfig& cfg);

}  // namespace mbr::data
