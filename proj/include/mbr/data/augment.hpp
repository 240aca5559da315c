#pragma once

#include <cmath>

#include "mbr/core/rng.hpp"
#include "mbr/data/image.hpp"

namespace mbr::data {

// Training-time augmentation, applied in order: zero-pad, random crop back to
// the target size, horizontal flip, random erasing.
struct AugmentConfig {
  Index target_size = 256;  // 256 matches the training recipe
  Index pad = 10;
  double hflip_prob = 0.5;
  bool erasing = true;
  double erase_prob = 0.5;
  double erase_area_lo = 0.02, erase_area_hi = 0.4;
  double erase_aspect_lo = 0.3, erase_aspect_hi = 1.0 / 0.3;

  static AugmentConfig disabled(Index size = 256) {
    AugmentConfig c;
    c.target_size = size;
    c.pad = 0;
    c.hflip_prob = 0.0;
    c.erasing = false;
    return c;
  }
};

// All stochastic choices for one image, drawn up front so the pixel work can
// run on worker threads without touching the rng.
struct AugmentPlan {
  Index crop_x = 0, crop_y = 0;  // offset into the padded image
  bool flip = false;
  bool erase = false;
  Index ex = 0, ey = 0, ew = 0, eh = 0;
};

// Draw order is part of the determinism contract: crop x, crop y, flip,
// erase gate, then per-attempt (area, aspect, x, y).
inline AugmentPlan draw_augment(const AugmentConfig& cfg, Rng& rng) {
  AugmentPlan plan;
  if (cfg.pad > 0) {
    plan.crop_x = Index(rng.uniform_int(std::uint64_t(2 * cfg.pad + 1)));
    plan.crop_y = Index(rng.uniform_int(std::uint64_t(2 * cfg.pad + 1)));
  }
  if (cfg.hflip_prob > 0) plan.flip = rng.uniform() < cfg.hflip_prob;
  if (cfg.erasing && rng.uniform() < cfg.erase_prob) {
    const Index s = cfg.target_size;
    const double area = double(s) * double(s);
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double target = rng.uniform(cfg.erase_area_lo, cfg.erase_area_hi) * area;
      const double aspect = rng.uniform(cfg.erase_aspect_lo, cfg.erase_aspect_hi);
      const Index eh = Index(std::lround(std::sqrt(target * aspect)));
      const Index ew = Index(std::lround(std::sqrt(target / aspect)));
      if (eh < 1 || ew < 1 || eh >= s || ew >= s) continue;
      plan.erase = true;
      plan.eh = eh;
      plan.ew = ew;
      plan.ex = Index(rng.uniform_int(std::uint64_t(s - ew + 1)));
      plan.ey = Index(rng.uniform_int(std::uint64_t(s - eh + 1)));
      break;
    }
  }
  return plan;
}

// `img` must already be at the target size.
inline void apply_augment(ImageF& img, const AugmentConfig& cfg, const AugmentPlan& plan) {
  MBR_CHECK(img.w == cfg.target_size && img.h == cfg.target_size,
            "augment expects a ", cfg.target_size, "px image, got ", img.w, "x", img.h);
  const Index s = cfg.target_size;
  if (cfg.pad > 0) {
    // zero-pad then crop back to size at the drawn offset
    ImageF padded;
    padded.init(int(s + 2 * cfg.pad), int(s + 2 * cfg.pad));
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
          padded.at(c, x + int(cfg.pad), y + int(cfg.pad)) = img.at(c, x, y);
    ImageF cropped;
    cropped.init(int(s), int(s));
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
          cropped.at(c, x, y) = padded.at(c, x + int(plan.crop_x), y + int(plan.crop_y));
    img = std::move(cropped);
  }
  if (plan.flip) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s / 2; ++x)
          std::swap(img.at(c, x, y), img.at(c, int(s) - 1 - x, y));
  }
  if (plan.erase) {
    for (int c = 0; c < 3; ++c)
      for (Index y = plan.ey; y < plan.ey + plan.eh; ++y)
        for (Index x = plan.ex; x < plan.ex + plan.ew; ++x)
          img.at(c, int(x), int(y)) = kChannelMean[c];
  }
}

}  // namespace mbr::data
