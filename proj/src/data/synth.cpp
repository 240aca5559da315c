#include "mbr/data/synth.hpp"

#include <cmath>
#include <filesystem>

#include "mbr/core/rng.hpp"
#include "mbr/data/png_io.hpp"

namespace fs = std::filesystem;

namespace mbr::data {

namespace {

struct Rgb {
  double r, g, b;
};

Rgb hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

struct IdentityStyle {
  Rgb body, accent;
  int pattern;       // 0 stripes, 1 checker, 2 rings
  double pattern_freq;
  double body_aspect;
};

IdentityStyle identity_style(Index id) {
  IdentityStyle s;
  const double hue = std::fmod(double(id) * 0.618033988749895, 1.0);
  s.body = hsv(hue, 0.85, 0.95);
  s.accent = hsv(hue + 0.47, 0.9, 0.55);
  s.pattern = int(id % 3);
  s.pattern_freq = 3.0 + double(id % 5);
  s.body_aspect = 0.55 + 0.1 * double(id % 4) / 3.0;
  return s;
}

struct CameraStyle {
  Rgb gain;
  double background;
};

CameraStyle camera_style(Index cam, std::uint64_t seed) {
  Rng rng = Rng(seed).fork(0xCA00 + std::uint64_t(cam));
  CameraStyle c;
  c.gain = {rng.uniform(0.9, 1.1), rng.uniform(0.9, 1.1), rng.uniform(0.9, 1.1)};
  c.background = rng.uniform(0.12, 0.3);
  return c;
}

ImageU8 render(const SynthConfig& cfg, Index id, Index cam, Index view, std::uint64_t jitter_key) {
  const IdentityStyle ident = identity_style(id);
  const CameraStyle camera = camera_style(cam, cfg.seed);
  Rng rng = Rng(cfg.seed).fork(jitter_key);

  const int s = int(cfg.size);
  const double cx = s * 0.5 + rng.uniform(-0.05, 0.05) * s;
  const double cy = s * 0.5 + rng.uniform(-0.05, 0.05) * s;
  const double scale = (0.30 + rng.uniform(-0.03, 0.03)) * s;
  // views tilt the shape by distinct but moderate angles; identity cues
  // (color, pattern) stay dominant so the task is learnable at desk scale
  const double spread = 0.35;
  const double angle = (double(view) - double(cfg.n_views - 1) / 2.0) *
                           (cfg.n_views > 1 ? spread / double(cfg.n_views - 1) : 0.0) +
                       rng.uniform(-0.08, 0.08);
  const double brightness = rng.uniform(0.92, 1.08);
  const double ca = std::cos(angle), sa = std::sin(angle);

  ImageF img;
  img.init(s, s);
  Rng noise = rng.fork(1);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      // into the shape frame
      const double dx = (x - cx) / scale, dy = (y - cy) / scale;
      const double u = ca * dx + sa * dy;
      const double v = (-sa * dx + ca * dy) / ident.body_aspect;

      // vehicle-ish silhouette: body super-ellipse plus a cabin bump
      const double body = std::pow(std::abs(u), 2.5) + std::pow(std::abs(v), 2.5);
      const double cab = std::pow(std::abs(u + 0.25), 2.0) / 0.16 +
                         std::pow(std::abs(v + 0.55), 2.0) / 0.09;
      const bool inside = body < 1.0 || cab < 1.0;

      Rgb col;
      if (inside) {
        col = ident.body;
        double mod = 0.0;
        switch (ident.pattern) {
          case 0: mod = std::sin(u * ident.pattern_freq * M_PI); break;
          case 1: mod = std::sin(u * ident.pattern_freq * M_PI) *
                        std::sin(v * ident.pattern_freq * M_PI); break;
          default: mod = std::sin((u * u + v * v) * ident.pattern_freq * 2.0 * M_PI); break;
        }
        if (mod > 0.25) col = ident.accent;
        if (cab < 1.0 && body >= 1.0) col = {col.r * 0.6, col.g * 0.6, col.b * 0.6};
      } else {
        const double g = camera.background * (1.0 + 0.15 * double(y) / s);
        col = {g, g, g};
      }
      const double nz = noise.uniform(-0.01, 0.01);
      img.at(0, x, y) = float(std::clamp(col.r * brightness * camera.gain.r + nz, 0.0, 1.0));
      img.at(1, x, y) = float(std::clamp(col.g * brightness * camera.gain.g + nz, 0.0, 1.0));
      img.at(2, x, y) = float(std::clamp(col.b * brightness * camera.gain.b + nz, 0.0, 1.0));
    }
  return to_u8(img);
}

std::string two_pad(Index v, int width) {
  std::string s = std::to_string(v);
  while (int(s.size()) < width) s = "0" + s;
  return s;
}

}  // namespace

DatasetTriplet synth_dataset(const std::string& root, const SynthConfig& cfg) {
  cfg.validate();
  fs::create_directories(root);

  DatasetTriplet out;
  out.train.split = Split::Train;
  out.query.split = Split::Query;
  out.gallery.split = Split::Gallery;

  auto emit = [&](DatasetManifest& man, const char* split, Index id, Index cam, Index view,
                  Index idx) {
    const fs::path dir = fs::path(root) / split;
    fs::create_directories(dir);
    ImageRecord r;
    r.image_id = std::string(split) + "_" + two_pad(id, 4) + "_c" + two_pad(cam, 3) + "_v" +
                 std::to_string(view) + "_" + two_pad(idx, 3);
    r.path = (dir / (r.image_id + ".png")).string();
    r.vehicle_id = int(id);
    r.camera_id = int(cam);
    r.view_id = int(view);
    const std::uint64_t key = hash_combine(std::uint64_t(idx * 1315423911ull + 17),
                                           hash_combine(std::uint64_t(id) * 2654435761ull,
                                                        std::uint64_t(cam) * 40503ull +
                                                            std::uint64_t(view)));
    write_png(r.path, render(cfg, id, cam, view, key));
    man.records.push_back(std::move(r));
  };

  for (Index id = 0; id < cfg.n_ids; ++id) {
    for (Index i = 0; i < cfg.imgs_per_id; ++i)
      emit(out.train, "train", id, (id + i) % cfg.n_cams, i % cfg.n_views, i);
    // queries and gallery span several cameras so the same-camera protocol
    // filter is exercised and cross-camera positives always exist
    for (Index q = 0; q < cfg.query_per_id; ++q)
      emit(out.query, "query", id, (id + q) % cfg.n_cams, q % cfg.n_views, q);
    for (Index g = 0; g < cfg.gallery_per_id; ++g)
      emit(out.gallery, "gallery", id, (id + g + 1) % cfg.n_cams, g % cfg.n_views, g);
  }

  save_manifest_csv(out.train, (fs::path(root) / "train.csv").string());
  save_manifest_csv(out.query, (fs::path(root) / "query.csv").string());
  save_manifest_csv(out.gallery, (fs::path(root) / "gallery.csv").string());
  return out;
}

}  // namespace mbr::data
