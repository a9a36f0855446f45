#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "magicskin/gaussian.hpp"
#include "magicskin/preprocess.hpp"
#include "magicskin/raster.hpp"
#include "magicskin/simulate.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("magicskin_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline magicskin::Frame random_frame(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  magicskin::Frame f(w, h);
  for (auto& v : f.data()) v = static_cast<std::uint8_t>(d(rng));
  return f;
}

inline magicskin::GrayFrame random_gray(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  magicskin::GrayFrame g(w, h);
  for (auto& v : g.data()) v = d(rng);
  return g;
}

/// Smooth random texture in [0,1]: white noise blurred with `sigma`, rescaled.
inline magicskin::GrayFrame texture(int w, int h, std::uint64_t seed, double sigma = 2.0) {
  auto g = magicskin::gaussian_blur(random_gray(w, h, seed), sigma);
  float lo = 1e9f, hi = -1e9f;
  for (float v : g.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (auto& v : g.data()) v = (v - lo) / (hi - lo);
  return g;
}

/// Bilinear sample with clamped borders.
inline double sample(const magicskin::GrayFrame& g, double x, double y) {
  x = std::clamp(x, 0.0, g.width() - 1.0);
  y = std::clamp(y, 0.0, g.height() - 1.0);
  const int x0 = std::min(static_cast<int>(x), g.width() - 2);
  const int y0 = std::min(static_cast<int>(y), g.height() - 2);
  const double fx = x - x0;
  const double fy = y - y0;
  return (1 - fx) * (1 - fy) * g.at(x0, y0) + fx * (1 - fy) * g.at(x0 + 1, y0) +
         (1 - fx) * fy * g.at(x0, y0 + 1) + fx * fy * g.at(x0 + 1, y0 + 1);
}

/// Content moved by (dx, dy): out(x, y) = g(x - dx, y - dy).
inline magicskin::GrayFrame shifted(const magicskin::GrayFrame& g, double dx, double dy) {
  magicskin::GrayFrame out(g.width(), g.height());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) out.at(x, y) = static_cast<float>(sample(g, x - dx, y - dy));
  return out;
}

/// Rest-state render of a design, noise seeded.
inline magicskin::Frame static_frame(magicskin::MarkerDesign design, std::uint64_t seed = 7,
                                     double wear = 0.0) {
  auto scene = magicskin::render_scene(magicskin::MarkerPattern::make(design), seed);
  if (wear > 0.0) scene = magicskin::apply_wear(scene, wear);
  return magicskin::render_frame(scene, magicskin::DeformationField{}, {}, seed + 1);
}

inline magicskin::PreprocessedFrame static_pre(magicskin::MarkerDesign design,
                                               std::uint64_t seed = 7, double wear = 0.0) {
  return magicskin::preprocess_pipeline(static_frame(design, seed, wear), {});
}

}  // namespace testutil
