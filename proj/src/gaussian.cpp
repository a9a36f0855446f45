#include "magicskin/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "magicskin/error.hpp"

namespace magicskin {

int gaussian_radius(double sigma) {
  if (!(sigma > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "gaussian sigma must be > 0, got " +
                                                std::to_string(sigma));
  }
  return static_cast<int>(std::ceil(3.0 * sigma));
}

std::vector<float> gaussian_kernel(double sigma) {
  const int r = gaussian_radius(sigma);
  std::vector<double> w(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    w[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += w[i + r];
  }
  std::vector<float> k(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) k[i] = static_cast<float>(w[i] / sum);
  return k;
}

void gaussian_blur(std::span<const float> src, std::span<float> dst, int width, int height,
                   double sigma) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (src.size() != n || dst.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "gaussian_blur: plane size mismatch");
  }
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const float* taps = k.data() + r;  // taps[-r..r]

  // Horizontal pass into tmp. The kernel is symmetric, so mirrored taps are
  // folded to halve the multiplies.
  std::vector<float> tmp(n);
  std::vector<float> padded(static_cast<std::size_t>(width) + 2 * r);
  for (int y = 0; y < height; ++y) {
    const float* in = src.data() + static_cast<std::size_t>(y) * width;
    for (int i = 0; i < width + 2 * r; ++i) padded[i] = in[reflect_index(i - r, width)];
    float* out = tmp.data() + static_cast<std::size_t>(y) * width;
    const float* p = padded.data() + r;
    const float k0 = taps[0];
    for (int x = 0; x < width; ++x) out[x] = k0 * p[x];
    for (int t = 1; t <= r; ++t) {
      const float kt = taps[t];
      const float* lo = p - t;
      const float* hi = p + t;
      for (int x = 0; x < width; ++x) out[x] += kt * (lo[x] + hi[x]);
    }
  }

  // Vertical pass, accumulated row by row so the inner loop runs along x.
  for (int y = 0; y < height; ++y) {
    float* out = dst.data() + static_cast<std::size_t>(y) * width;
    const float* c = tmp.data() + static_cast<std::size_t>(y) * width;
    const float k0 = taps[0];
    for (int x = 0; x < width; ++x) out[x] = k0 * c[x];
    for (int t = 1; t <= r; ++t) {
      const float kt = taps[t];
      const float* lo = tmp.data() + static_cast<std::size_t>(reflect_index(y - t, height)) * width;
      const float* hi = tmp.data() + static_cast<std::size_t>(reflect_index(y + t, height)) * width;
      for (int x = 0; x < width; ++x) out[x] += kt * (lo[x] + hi[x]);
    }
  }
}

void gaussian_blur_wide(std::span<const float> src, std::span<float> dst, int width, int height,
                        double sigma) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (src.size() != n || dst.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "gaussian_blur_wide: plane size mismatch");
  }
  const int f = static_cast<int>(sigma / 5.0);
  if (sigma < 16.0 || width < 4 * f || height < 4 * f) {
    gaussian_blur(src, dst, width, height, sigma);
    return;
  }
  const int cw = (width + f - 1) / f;
  const int ch = (height + f - 1) / f;
  std::vector<float> coarse(static_cast<std::size_t>(cw) * ch, 0.0f);
  for (int y = 0; y < height; ++y) {
    const float* in = src.data() + static_cast<std::size_t>(y) * width;
    float* out = coarse.data() + static_cast<std::size_t>(y / f) * cw;
    for (int x = 0; x < width; ++x) out[x / f] += in[x];
  }
  for (int j = 0; j < ch; ++j) {
    const int rows = std::min(f, height - j * f);
    for (int i = 0; i < cw; ++i) {
      const int cols = std::min(f, width - i * f);
      coarse[static_cast<std::size_t>(j) * cw + i] /= static_cast<float>(rows * cols);
    }
  }
  // Box averaging and bilinear reconstruction each add blur (f^2/12 and
  // f^2/6 per axis); the coarse kernel covers the remainder.
  const double ff = static_cast<double>(f) * f;
  const double rest = sigma * sigma - ff / 12.0 - ff / 6.0;
  std::vector<float> smooth(coarse.size());
  gaussian_blur(coarse, smooth, cw, ch, std::sqrt(rest) / f);

  std::vector<int> x0(width);
  std::vector<float> fx(width);
  const double c0 = 0.5 * (f - 1);
  for (int x = 0; x < width; ++x) {
    const double u = std::clamp((x - c0) / f, 0.0, static_cast<double>(cw - 1));
    x0[x] = std::min(static_cast<int>(u), cw - 2);
    fx[x] = static_cast<float>(u - x0[x]);
  }
  for (int y = 0; y < height; ++y) {
    const double v = std::clamp((y - c0) / f, 0.0, static_cast<double>(ch - 1));
    const int y0 = std::min(static_cast<int>(v), ch - 2);
    const auto fy = static_cast<float>(v - y0);
    const float* r0 = smooth.data() + static_cast<std::size_t>(y0) * cw;
    const float* r1 = r0 + cw;
    float* out = dst.data() + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      const int i = x0[x];
      const float top = r0[i] + fx[x] * (r0[i + 1] - r0[i]);
      const float bot = r1[i] + fx[x] * (r1[i + 1] - r1[i]);
      out[x] = top + fy * (bot - top);
    }
  }
}

GrayFrame gaussian_blur(const GrayFrame& src, double sigma) {
  GrayFrame out(src.width(), src.height(), 0.0f, src.index());
  gaussian_blur(src.data(), out.data(), src.width(), src.height(), sigma);
  return out;
}

}  // namespace magicskin
