#include "magicskin/overlay.hpp"

#include <cmath>
#include <cstdlib>

#include "magicskin/error.hpp"

namespace magicskin {

namespace {

void put(Frame& f, int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= f.width() || y >= f.height()) return;
  for (int k = 0; k < 3; ++k) f.at(x, y, k) = c[k];
}

void line(Frame& f, Point2 a, Point2 b, Rgb c) {
  int x0 = static_cast<int>(std::lround(a.x));
  int y0 = static_cast<int>(std::lround(a.y));
  const int x1 = static_cast<int>(std::lround(b.x));
  const int y1 = static_cast<int>(std::lround(b.y));
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    put(f, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void cross(Frame& f, Point2 p, Rgb c) {
  const int x = static_cast<int>(std::lround(p.x));
  const int y = static_cast<int>(std::lround(p.y));
  for (int d = -2; d <= 2; ++d) {
    put(f, x + d, y, c);
    put(f, x, y + d, c);
  }
}

}  // namespace

Frame draw_tracks(const Frame& base, const TrackReport& report, int frame, int trail) {
  Frame out = base;
  const Rgb trail_color{60, 230, 60};
  const Rgb point_color{255, 40, 40};
  for (const auto& t : report.tracks) {
    const int k = frame - t.birth;
    if (k < 0 || k >= static_cast<int>(t.positions.size())) continue;
    const int first = std::max(0, k - trail);
    for (int i = first; i < k; ++i) line(out, t.positions[i], t.positions[i + 1], trail_color);
    cross(out, t.positions[k], point_color);
  }
  return out;
}

Frame draw_points(const Frame& base, std::span<const Point2> points, Rgb color) {
  Frame out = base;
  for (const auto& p : points) cross(out, p, color);
  return out;
}

Frame draw_mask(const Frame& base, const Mask& mask, Rgb color) {
  if (mask.width != base.width() || mask.height != base.height()) {
    throw Error(ErrorCode::DimensionMismatch, "mask and frame sizes differ");
  }
  Frame out = base;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      for (int k = 0; k < 3; ++k) {
        out.at(x, y, k) = static_cast<std::uint8_t>((out.at(x, y, k) + color[k] + 1) / 2);
      }
    }
  }
  return out;
}

}  // namespace magicskin
