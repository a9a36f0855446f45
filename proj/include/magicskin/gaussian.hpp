#pragma once

#include <span>
#include <vector>

#include "magicskin/raster.hpp"

namespace magicskin {

/// Symmetric (edge-duplicating) reflection of `i` into [0, n): ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
/// Works for arbitrarily large offsets, so kernels wider than the image are fine.
[[nodiscard]] constexpr int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

/// Truncation radius used by every blur in the library: ceil(3 sigma).
[[nodiscard]] int gaussian_radius(double sigma);

/// Normalized 1D taps, length 2*gaussian_radius(sigma)+1.
[[nodiscard]] std::vector<float> gaussian_kernel(double sigma);

/// Separable blur of a row-major plane, reflect borders. `src` and `dst` may
/// not alias.
void gaussian_blur(std::span<const float> src, std::span<float> dst, int width, int height,
                   double sigma);

[[nodiscard]] GrayFrame gaussian_blur(const GrayFrame& src, double sigma);

/// Wide-kernel blur computed on a box-decimated plane and upsampled
/// bilinearly. Falls back to the exact blur when sigma < 16. Max deviation
/// from the exact blur is well under 1% of the input range on natural images.
void gaussian_blur_wide(std::span<const float> src, std::span<float> dst, int width, int height,
                        double sigma);

}  // namespace magicskin
