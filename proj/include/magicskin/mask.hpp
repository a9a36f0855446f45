#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "magicskin/pattern.hpp"
#include "magicskin/preprocess.hpp"

namespace magicskin {

enum class MaskStage { geometry, fallback };

/// Which side of the threshold is kept.
enum class Phase { dark, bright };

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 1 = trackable
  MaskStage stage = MaskStage::geometry;

  Mask() = default;
  Mask(int w, int h, MaskStage s, std::uint8_t fill = 0)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill), stage(s) {}

  [[nodiscard]] bool at(int x, int y) const {
    return bits[static_cast<std::size_t>(y) * width + x] != 0;
  }
  [[nodiscard]] std::size_t count() const noexcept;
};

struct MaskHealth {
  double coverage = 0.0;
  int component_count = 0;
  double grid_score = 0.0;
  bool passed = false;
};

/// Thresholds for the health check and the adaptive segmentation.
struct MaskConfig {
  double coverage_min = 0.05;
  double coverage_max = 0.80;
  double component_tolerance = 2.0;  // count must lie in [E/tol, E*tol]
  double grid_score_min = 0.5;
  double adaptive_k = 1.0;
  double window_pitches = 1.0;  // adaptive window side, in grid pitches
  /// Gaussian pre-smoothing before thresholding, as a fraction of the square
  /// side (0 disables). Suppresses surface texture finer than the cells.
  double presmooth = 0.0625;
  /// Geometry-mask components are kept only when they look like a marker
  /// cell: bounding-box sides within [cell_side_min, cell_side_max] x the
  /// nominal square side and at least `cell_fill_min` of the box covered.
  double cell_side_min = 0.7;
  double cell_side_max = 1.3;
  double cell_fill_min = 0.8;

  void validate() const;
};

void to_json(nlohmann::json& j, const MaskConfig& cfg);
void from_json(const nlohmann::json& j, MaskConfig& cfg);

void to_json(nlohmann::json& j, const MaskHealth& h);

struct MaskSelection {
  Mask mask;
  MaskHealth health;
  MaskHealth geometry_health;  // health of the first stage, for diagnostics
};

/// Local adaptive threshold (mean -/+ k * std over a one-pitch window) on the
/// enhanced gray frame, followed by 3x3 opening then closing and removal of
/// components whose area does not fit a marker cell.
[[nodiscard]] Mask geometry_mask(const PreprocessedFrame& pre, const MarkerPattern& pattern,
                                 const MaskConfig& cfg = {});

/// Global Otsu threshold with the same morphology. `phase` picks the side kept
/// (dark by default).
[[nodiscard]] Mask fallback_mask(const PreprocessedFrame& pre, Phase phase = Phase::dark);

[[nodiscard]] MaskHealth mask_health(const Mask& mask, const MarkerPattern& pattern,
                                     const MaskConfig& cfg = {});

/// Geometry mask when it passes; otherwise the fallback mask (possibly failing).
[[nodiscard]] MaskSelection select_mask(const PreprocessedFrame& pre, const MarkerPattern& pattern,
                                        const MaskConfig& cfg = {});

// Building blocks, exposed for tests and tooling.

/// Otsu threshold over 256 bins of a [0,1] plane. Returns the last bin of the
/// lower class (values with bin <= t are "dark").
[[nodiscard]] int otsu_threshold(const GrayFrame& gray);

/// 8-connected component count.
[[nodiscard]] int count_components(const Mask& mask);

struct CellShape {
  double side_min = 0.0;  // px
  double side_max = 0.0;
  double fill_min = 0.0;
};

/// Clears 8-connected components whose bounding box or fill ratio does not
/// match `shape`.
void filter_cells(Mask& mask, const CellShape& shape);

void morph_open(Mask& mask);
void morph_close(Mask& mask);

/// Mean of the row- and column-projection autocorrelation peaks near `pitch_px`.
[[nodiscard]] double grid_score(const Mask& mask, double pitch_px);

}  // namespace magicskin
