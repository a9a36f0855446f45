#pragma once

// Otsu by exhaustive search: for every threshold the two classes are rebuilt
// from the raw pixel list.

#include <algorithm>
#include <cmath>

#include "magicskin/raster.hpp"

namespace oracle {

struct OtsuResult {
  int threshold = 0;
  double between = -1.0;
};

inline double between_class(const magicskin::GrayFrame& g, int t) {
  double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
  for (float v : g.data()) {
    const int b = static_cast<int>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0));
    if (b <= t) {
      n0 += 1;
      s0 += b;
    } else {
      n1 += 1;
      s1 += b;
    }
  }
  if (n0 == 0 || n1 == 0) return -1.0;
  const double d = s0 / n0 - s1 / n1;
  return n0 * n1 * d * d;
}

inline OtsuResult otsu(const magicskin::GrayFrame& g) {
  OtsuResult best;
  for (int t = 0; t < 255; ++t) {
    const double v = between_class(g, t);
    if (v > best.between) best = {t, v};
  }
  return best;
}

}  // namespace oracle
