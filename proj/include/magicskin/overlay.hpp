#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "magicskin/mask.hpp"
#include "magicskin/raster.hpp"
#include "magicskin/track.hpp"

namespace magicskin {

using Rgb = std::array<std::uint8_t, 3>;

/// Draws trails (up to `trail` previous steps) and current positions of the
/// tracks alive at `frame`. `base` is in the report's (cropped) coordinates.
[[nodiscard]] Frame draw_tracks(const Frame& base, const TrackReport& report, int frame,
                                int trail = 10);

/// Small crosses at each point.
[[nodiscard]] Frame draw_points(const Frame& base, std::span<const Point2> points,
                                Rgb color = {255, 40, 40});

/// Tints mask pixels toward `color` by half.
[[nodiscard]] Frame draw_mask(const Frame& base, const Mask& mask, Rgb color = {40, 200, 255});

}  // namespace magicskin
