#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "magicskin/raster.hpp"

namespace magicskin {

struct TileGrid {
  int cols = 8;
  int rows = 8;
  friend bool operator==(const TileGrid&, const TileGrid&) = default;
};

struct PreprocessConfig {
  double crop_fraction = 0.05;  // removed from each side
  double retinex_sigma = 40.0;
  double clahe_clip_limit = 2.0;
  TileGrid clahe_tiles{};
  double unsharp_radius = 3.0;
  double unsharp_amount = 0.8;

  /// Throws ConfigError on any invariant violation.
  void validate() const;

  friend bool operator==(const PreprocessConfig&, const PreprocessConfig&) = default;
};

/// Strict schema: exact field names, unknown keys rejected, missing keys keep defaults.
void to_json(nlohmann::json& j, const PreprocessConfig& cfg);
void from_json(const nlohmann::json& j, PreprocessConfig& cfg);

struct PixelOffset {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelOffset&, const PixelOffset&) = default;
};

struct CropResult {
  Frame frame;
  PixelOffset offset;
};

struct PreprocessedFrame {
  Frame color;              // white-balanced, Retinex-normalized
  GrayFrame gray_enhanced;  // CLAHE + unsharp; the tracking substrate
  PixelOffset crop_offset;
};

/// Every intermediate of the pipeline, in order. Used by `magicskin inspect`.
struct PipelineStages {
  Frame input;
  Frame cropped;
  Frame balanced;
  Frame retinex;
  GrayFrame gray;
  GrayFrame clahe;
  GrayFrame enhanced;
  PixelOffset crop_offset;
};

/// Planar float RGB, samples in [0,255]. Internal working format of the color path.
struct RgbPlanes {
  int width = 0;
  int height = 0;
  std::array<std::vector<float>, 3> channels;

  [[nodiscard]] static RgbPlanes from_frame(const Frame& frame);
  /// Rounds and clamps to 8 bits.
  [[nodiscard]] Frame to_frame(int index = 0) const;
};

[[nodiscard]] CropResult crop_border(const Frame& frame, double fraction);

[[nodiscard]] Frame gray_world_balance(const Frame& frame);
void gray_world_balance(RgbPlanes& planes);

[[nodiscard]] Frame retinex_normalize(const Frame& frame, double sigma);
void retinex_normalize(RgbPlanes& planes, double sigma);

[[nodiscard]] GrayFrame clahe(const GrayFrame& gray, double clip_limit, TileGrid tiles);

[[nodiscard]] GrayFrame unsharp_mask(const GrayFrame& gray, double radius, double amount);

[[nodiscard]] PreprocessedFrame preprocess_pipeline(const Frame& frame,
                                                    const PreprocessConfig& cfg);
[[nodiscard]] PipelineStages preprocess_stages(const Frame& frame, const PreprocessConfig& cfg);

}  // namespace magicskin
