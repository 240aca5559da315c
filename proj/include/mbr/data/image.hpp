#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mbr/core/common.hpp"

namespace mbr::data {

// interleaved 8-bit RGB
struct ImageU8 {
  int w = 0, h = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t* px(int x, int y) { return rgb.data() + (size_t(y) * w + x) * 3; }
  const std::uint8_t* px(int x, int y) const { return rgb.data() + (size_t(y) * w + x) * 3; }
};

// planar CHW float RGB in [0, 1]
struct ImageF {
  int w = 0, h = 0;
  std::vector<float> chw;

  float& at(int c, int x, int y) { return chw[(size_t(c) * h + y) * w + x]; }
  float at(int c, int x, int y) const { return chw[(size_t(c) * h + y) * w + x]; }
  void init(int width, int height, float fill = 0.f) {
    w = width;
    h = height;
    chw.assign(size_t(3) * w * h, fill);
  }
};

inline ImageF to_float(const ImageU8& u) {
  ImageF f;
  f.init(u.w, u.h);
  const float inv = 1.0f / 255.0f;
  for (int y = 0; y < u.h; ++y)
    for (int x = 0; x < u.w; ++x) {
      const std::uint8_t* p = u.px(x, y);
      for (int c = 0; c < 3; ++c) f.at(c, x, y) = p[c] * inv;
    }
  return f;
}

inline ImageU8 to_u8(const ImageF& f) {
  ImageU8 u;
  u.w = f.w;
  u.h = f.h;
  u.rgb.resize(size_t(3) * f.w * f.h);
  for (int y = 0; y < f.h; ++y)
    for (int x = 0; x < f.w; ++x) {
      std::uint8_t* p = u.px(x, y);
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(f.at(c, x, y), 0.0f, 1.0f);
        p[c] = std::uint8_t(std::lround(v * 255.0f));
      }
    }
  return u;
}

inline ImageF resize_bilinear(const ImageF& src, int w, int h) {
  if (src.w == w && src.h == h) return src;
  ImageF dst;
  dst.init(w, h);
  const float sx = float(src.w) / float(w);
  const float sy = float(src.h) / float(h);
  for (int y = 0; y < h; ++y) {
    const float fy = (y + 0.5f) * sy - 0.5f;
    const int y0 = std::clamp(int(std::floor(fy)), 0, src.h - 1);
    const int y1 = std::min(y0 + 1, src.h - 1);
    const float wy = std::clamp(fy - y0, 0.0f, 1.0f);
    for (int x = 0; x < w; ++x) {
      const float fx = (x + 0.5f) * sx - 0.5f;
      const int x0 = std::clamp(int(std::floor(fx)), 0, src.w - 1);
      const int x1 = std::min(x0 + 1, src.w - 1);
      const float wx = std::clamp(fx - x0, 0.0f, 1.0f);
      for (int c = 0; c < 3; ++c) {
        const float a = src.at(c, x0, y0) * (1 - wx) + src.at(c, x1, y0) * wx;
        const float b = src.at(c, x0, y1) * (1 - wx) + src.at(c, x1, y1) * wx;
        dst.at(c, x, y) = a * (1 - wy) + b * wy;
      }
    }
  }
  return dst;
}

// pretraining-corpus channel statistics used for input normalization
inline constexpr float kChannelMean[3] = {0.485f, 0.456f, 0.406f};
inline constexpr float kChannelStd[3] = {0.229f, 0.224f, 0.225f};

}  // namespace mbr::data
