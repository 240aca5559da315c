#pragma once

#include <mutex>
#include <optional>
#include <unordered_map>

#include "mbr/core/parallel.hpp"
#include "mbr/core/tensor.hpp"
#include "mbr/data/augment.hpp"
#include "mbr/data/manifest.hpp"
#include "mbr/data/png_io.hpp"

namespace mbr::data {

// Decoded-image cache. Desk-scale datasets fit comfortably; the cache is
// shared across epochs so each file decodes once.
class ImageCache {
 public:
  const ImageU8& get(const std::string& path) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = map_.find(path);
      if (it != map_.end()) return it->second;
    }
    ImageU8 img = read_png(path);
    std::lock_guard<std::mutex> lock(mu_);
    return map_.emplace(path, std::move(img)).first->second;
  }

 private:
  std::mutex mu_;
  std::unordered_map<std::string, ImageU8> map_;
};

struct BatchMeta {
  std::vector<int> labels;  // compact class ids (train) or raw vehicle ids
  std::vector<int> cams;
  std::vector<int> views;  // -1 entries replaced by 0; has_views says if all were present
  bool has_views = true;
};

// Assembles one normalized batch tensor. Augmentation plans are drawn
// sequentially from `rng` (determinism contract), pixel work runs on worker
// threads with the single-threaded output ordering.
inline BatchMeta load_batch(const DatasetManifest& man, const std::vector<Index>& indices,
                            const std::vector<int>& labels_by_record, bool train,
                            const AugmentConfig& aug, Rng& rng, ImageCache* cache,
                            Tensor4<float>& out) {
  const Index b = Index(indices.size());
  const Index s = aug.target_size;
  out.resize(b, 3, s, s);

  std::vector<AugmentPlan> plans(static_cast<size_t>(b));
  if (train)
    for (Index i = 0; i < b; ++i) plans[size_t(i)] = draw_augment(aug, rng);

  BatchMeta meta;
  meta.labels.resize(size_t(b));
  meta.cams.resize(size_t(b));
  meta.views.resize(size_t(b));

  std::optional<Error> first_error;
  std::mutex err_mu;
  parallel_for(b, [&](Index i) {
    try {
      const ImageRecord& rec = man.records[size_t(indices[size_t(i)])];
      ImageCache local;
      const ImageU8& u8 = (cache ? *cache : local).get(rec.path);
      ImageF img = resize_bilinear(to_float(u8), int(s), int(s));
      if (train) apply_augment(img, aug, plans[size_t(i)]);
      float* dst = out.sample(i);
      for (int c = 0; c < 3; ++c) {
        const float mean = kChannelMean[c], inv_std = 1.0f / kChannelStd[c];
        const float* src = img.chw.data() + size_t(c) * s * s;
        for (Index p = 0; p < s * s; ++p) dst[c * s * s + p] = (src[p] - mean) * inv_std;
      }
      meta.labels[size_t(i)] =
          labels_by_record.empty() ? rec.vehicle_id : labels_by_record[size_t(indices[size_t(i)])];
      meta.cams[size_t(i)] = rec.camera_id;
      meta.views[size_t(i)] = rec.has_view() ? rec.view_id : 0;
      if (!rec.has_view()) {
        std::lock_guard<std::mutex> lock(err_mu);
        meta.has_views = false;
      }
    } catch (const Error& e) {
      std::lock_guard<std::mutex> lock(err_mu);
      if (!first_error) first_error = e;
    }
  });
  if (first_error) throw *first_error;
  return meta;
}

}  // namespace mbr::data
