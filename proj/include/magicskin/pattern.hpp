#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

namespace magicskin {

/// Camera raster of the sensor the simulator stands in for.
inline constexpr int kSensorWidth = 640;
inline constexpr int kSensorHeight = 480;

enum class MarkerDesign { clear, dense_ink, grey_lines, grey_squares };

[[nodiscard]] std::string_view to_string(MarkerDesign design) noexcept;
/// Throws ConfigError on an unknown name.
[[nodiscard]] MarkerDesign parse_design(std::string_view name);

/// Marker grid geometry. Squares of `square_mm` separated by `spacing_mm`
/// gaps; grey_lines tints everything except the squares.
struct MarkerPattern {
  MarkerDesign design = MarkerDesign::grey_squares;
  int cols = 12;
  int rows = 9;
  double square_mm = 1.0;
  double spacing_mm = 1.0;
  double tint_transmittance = 0.55;
  double px_per_mm = 16.0;

  /// Pattern with the design's default transmittance (clear 1.0, dense ink
  /// 0.02, translucent grey 0.55).
  [[nodiscard]] static MarkerPattern make(MarkerDesign design);

  [[nodiscard]] double pitch_px() const noexcept { return (square_mm + spacing_mm) * px_per_mm; }
  [[nodiscard]] double square_px() const noexcept { return square_mm * px_per_mm; }
  [[nodiscard]] int expected_cells() const noexcept { return cols * rows; }
  /// Grid extent in px: cols squares plus (cols-1) gaps, likewise for rows.
  [[nodiscard]] double extent_x_px() const noexcept {
    return (cols * square_mm + (cols - 1) * spacing_mm) * px_per_mm;
  }
  [[nodiscard]] double extent_y_px() const noexcept {
    return (rows * square_mm + (rows - 1) * spacing_mm) * px_per_mm;
  }
  /// True when the tinted phase is darker than its surroundings in the
  /// segmented region of interest (false for grey_lines, whose clear squares
  /// are the cells).
  [[nodiscard]] bool cells_are_dark() const noexcept {
    return design != MarkerDesign::grey_lines;
  }

  void validate() const;

  friend bool operator==(const MarkerPattern&, const MarkerPattern&) = default;
};

void to_json(nlohmann::json& j, const MarkerPattern& p);
void from_json(const nlohmann::json& j, MarkerPattern& p);

}  // namespace magicskin
