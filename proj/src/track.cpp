#include "magicskin/track.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "magicskin/error.hpp"
#include "magicskin/gaussian.hpp"

namespace magicskin {

// ---------------------------------------------------------------------------
// Config

void TrackConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, "track: " + m); };
  if (max_points < 1) fail("max_points must be >= 1");
  if (!(gftt_quality > 0.0 && gftt_quality <= 1.0)) fail("gftt_quality must be in (0,1]");
  if (!(gftt_min_dist >= 0.0)) fail("gftt_min_dist must be >= 0");
  if (lk_window < 3 || lk_window % 2 == 0) fail("lk_window must be odd and >= 3");
  if (pyramid_levels < 1) fail("pyramid_levels must be >= 1");
  if (lk_max_iters < 1) fail("lk_max_iters must be >= 1");
  if (!(lk_epsilon > 0.0)) fail("lk_epsilon must be > 0");
  if (!(fb_reject_threshold > 0.0)) fail("fb_reject_threshold must be > 0");
  if (border_margin && *border_margin < 0) fail("border_margin must be >= 0");
  if (!(min_eigenvalue >= 0.0)) fail("min_eigenvalue must be >= 0");
}

int TrackConfig::effective_margin(int width, int height) const {
  const int smallest = std::min(width, height);
  if (border_margin) return std::clamp(*border_margin, 0, std::max(0, (smallest - 1) / 2));
  return std::clamp(lk_window / 2, 0, smallest / 4);
}

int TrackConfig::window_at_level(int level) const {
  const int floor_size = std::min(15, lk_window);
  int w = std::max(floor_size, lk_window >> level);
  if (w % 2 == 0) ++w;
  return w;
}

void to_json(nlohmann::json& j, const TrackConfig& cfg) {
  j = nlohmann::json{{"max_points", cfg.max_points},
                     {"gftt_quality", cfg.gftt_quality},
                     {"gftt_min_dist", cfg.gftt_min_dist},
                     {"lk_window", cfg.lk_window},
                     {"pyramid_levels", cfg.pyramid_levels},
                     {"lk_max_iters", cfg.lk_max_iters},
                     {"lk_epsilon", cfg.lk_epsilon},
                     {"fb_reject_threshold", nullptr},
                     {"border_margin", nullptr},
                     {"min_eigenvalue", cfg.min_eigenvalue},
                     {"redetect", cfg.redetect},
                     {"full_frame_fallback", cfg.full_frame_fallback}};
  if (std::isfinite(cfg.fb_reject_threshold)) j["fb_reject_threshold"] = cfg.fb_reject_threshold;
  if (cfg.border_margin) j["border_margin"] = *cfg.border_margin;
}

void from_json(const nlohmann::json& j, TrackConfig& cfg) {
  constexpr std::string_view ctx = "track";
  detail::check_keys(j,
                     {"max_points", "gftt_quality", "gftt_min_dist", "lk_window", "pyramid_levels",
                      "lk_max_iters", "lk_epsilon", "fb_reject_threshold", "border_margin",
                      "min_eigenvalue", "redetect", "full_frame_fallback"},
                     ctx);
  TrackConfig out;
  detail::read_optional(j, "max_points", out.max_points, ctx);
  detail::read_optional(j, "gftt_quality", out.gftt_quality, ctx);
  detail::read_optional(j, "gftt_min_dist", out.gftt_min_dist, ctx);
  detail::read_optional(j, "lk_window", out.lk_window, ctx);
  detail::read_optional(j, "pyramid_levels", out.pyramid_levels, ctx);
  detail::read_optional(j, "lk_max_iters", out.lk_max_iters, ctx);
  detail::read_optional(j, "lk_epsilon", out.lk_epsilon, ctx);
  if (auto it = j.find("fb_reject_threshold"); it != j.end() && !it->is_null()) {
    detail::read_optional(j, "fb_reject_threshold", out.fb_reject_threshold, ctx);
  }
  if (auto it = j.find("border_margin"); it != j.end() && !it->is_null()) {
    int m = 0;
    detail::read_optional(j, "border_margin", m, ctx);
    out.border_margin = m;
  }
  detail::read_optional(j, "min_eigenvalue", out.min_eigenvalue, ctx);
  detail::read_optional(j, "redetect", out.redetect, ctx);
  detail::read_optional(j, "full_frame_fallback", out.full_frame_fallback, ctx);
  out.validate();
  cfg = out;
}

// ---------------------------------------------------------------------------
// Pyramid

namespace {

Pyramid::Padded pad_replicate(const GrayFrame& g, int pad) {
  Pyramid::Padded p;
  p.width = g.width();
  p.height = g.height();
  p.pad = pad;
  p.stride = g.width() + 2 * pad;
  p.data.resize(static_cast<std::size_t>(p.stride) * (g.height() + 2 * pad));
  for (int y = -pad; y < g.height() + pad; ++y) {
    const float* src = g.row(std::clamp(y, 0, g.height() - 1));
    float* dst = p.data.data() + static_cast<std::size_t>(y + pad) * p.stride;
    std::fill(dst, dst + pad, src[0]);
    std::copy(src, src + g.width(), dst + pad);
    std::fill(dst + pad + g.width(), dst + p.stride, src[g.width() - 1]);
  }
  return p;
}

GrayFrame decimate(const GrayFrame& g) {
  const GrayFrame blurred = gaussian_blur(g, 1.0);
  const int w = (g.width() + 1) / 2;
  const int h = (g.height() + 1) / 2;
  GrayFrame out(w, h, 0.0f, g.index());
  for (int y = 0; y < h; ++y) {
    const float* src = blurred.row(2 * y);
    float* dst = out.row(y);
    for (int x = 0; x < w; ++x) dst[x] = src[2 * x];
  }
  return out;
}

}  // namespace

Pyramid build_pyramid(const GrayFrame& gray, int levels, int window_capacity) {
  if (levels < 1) throw Error(ErrorCode::InvalidArgument, "pyramid needs at least one level");
  if (gray.empty()) throw Error(ErrorCode::InvalidArgument, "pyramid of an empty frame");
  Pyramid pyr;
  pyr.requested_ = levels;
  pyr.window_capacity_ = window_capacity;
  pyr.levels_.push_back(gray);
  for (int l = 1; l < levels; ++l) {
    const GrayFrame& prev = pyr.levels_.back();
    const int w = (prev.width() + 1) / 2;
    const int h = (prev.height() + 1) / 2;
    if (w < 16 || h < 16) break;
    pyr.levels_.push_back(decimate(prev));
  }
  TrackConfig shape;
  shape.lk_window = window_capacity | 1;
  for (int l = 0; l < pyr.level_count(); ++l) {
    pyr.padded_.push_back(pad_replicate(pyr.levels_[l], shape.window_at_level(l) / 2 + 3));
  }
  return pyr;
}

// ---------------------------------------------------------------------------
// Lucas-Kanade core

double min_eigenvalue(double g11, double g12, double g22) noexcept {
  const double half_trace = 0.5 * (g11 + g22);
  const double half_diff = 0.5 * (g11 - g22);
  return half_trace - std::sqrt(half_diff * half_diff + g12 * g12);
}

namespace {

// G accumulation for one row: float partial sums per row, double across rows.
inline void accumulate_g_row(const float* ix, const float* iy, int n, LkSystem& s) {
  float a = 0.0f;
  float b = 0.0f;
  float c = 0.0f;
#pragma omp simd reduction(+ : a, b, c)
  for (int i = 0; i < n; ++i) {
    a += ix[i] * ix[i];
    b += ix[i] * iy[i];
    c += iy[i] * iy[i];
  }
  s.g11 += a;
  s.g12 += b;
  s.g22 += c;
}


// Bilinear samples of n consecutive pixels with shared fractional weights.
inline void sample_row(const float* r0, const float* r1, float w00, float w01, float w10,
                       float w11, float* out, int n) {
#pragma omp simd
  for (int i = 0; i < n; ++i) {
    out[i] = w00 * r0[i] + w01 * r0[i + 1] + w10 * r1[i] + w11 * r1[i + 1];
  }
}

struct Bilinear {
  int ix;
  int iy;
  float w00, w01, w10, w11;
};

inline Bilinear bilinear_at(double x, double y) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const auto fx = static_cast<float>(x - fx0);
  const auto fy = static_cast<float>(y - fy0);
  return {static_cast<int>(fx0), static_cast<int>(fy0), (1.0f - fx) * (1.0f - fy),
          fx * (1.0f - fy), (1.0f - fx) * fy, fx * fy};
}

// Mismatch term for one row: bilinear sample of the target minus the template,
// weighted by the template gradients.
inline void accumulate_b_row(const float* r0, const float* r1, const Bilinear& bl,
                             const float* templ, const float* ix, const float* iy, int n,
                             LkSystem& s) {
  float u = 0.0f;
  float v = 0.0f;
#pragma omp simd reduction(+ : u, v)
  for (int i = 0; i < n; ++i) {
    const float e = bl.w00 * r0[i] + bl.w01 * r0[i + 1] + bl.w10 * r1[i] + bl.w11 * r1[i + 1] -
                    templ[i];
    u += e * ix[i];
    v += e * iy[i];
  }
  s.b1 += u;
  s.b2 += v;
}

// Scratch buffers for one window; reused across points and levels.
struct LkScratch {
  std::vector<float> templ;  // (w+2)^2 samples around the source point
  std::vector<float> ix;     // w*w
  std::vector<float> iy;
};

// Tracks a single point from `src` to `dst`.
FlowVec track_point(const Pyramid& src, const Pyramid& dst, Point2 p, const TrackConfig& cfg,
                    LkScratch& s) {
  FlowVec result;
  const int top = std::min(src.level_count(), dst.level_count()) - 1;
  double dx = 0.0;
  double dy = 0.0;
  for (int level = top; level >= 0; --level) {
    const double scale = 1.0 / static_cast<double>(1 << level);
    const Pyramid::Padded& a = src.padded(level);
    const Pyramid::Padded& b = dst.padded(level);
    const int w = cfg.window_at_level(level);
    const int half = w / 2;
    const int text = w + 2;
    const double px = p.x * scale;
    const double py = p.y * scale;
    if (px < 0.0 || py < 0.0 || px > a.width - 1 || py > a.height - 1) return result;

    // Template with a one-pixel ring for central differences.
    s.templ.resize(static_cast<std::size_t>(text) * text);
    s.ix.resize(static_cast<std::size_t>(w) * w);
    s.iy.resize(static_cast<std::size_t>(w) * w);
    {
      const Bilinear bl = bilinear_at(px - half - 1, py - half - 1);
      const float* base = a.origin() + static_cast<std::ptrdiff_t>(bl.iy) * a.stride + bl.ix;
      for (int r = 0; r < text; ++r) {
        const float* r0 = base + static_cast<std::ptrdiff_t>(r) * a.stride;
        sample_row(r0, r0 + a.stride, bl.w00, bl.w01, bl.w10, bl.w11,
                   s.templ.data() + static_cast<std::size_t>(r) * text, text);
      }
    }
    LkSystem sys;
    for (int r = 0; r < w; ++r) {
      const float* up = s.templ.data() + static_cast<std::size_t>(r) * text + 1;
      const float* mid = up + text;
      const float* dn = mid + text;
      float* gx = s.ix.data() + static_cast<std::size_t>(r) * w;
      float* gy = s.iy.data() + static_cast<std::size_t>(r) * w;
#pragma omp simd
      for (int c = 0; c < w; ++c) {
        gx[c] = 0.5f * (mid[c + 1] - mid[c - 1]);
        gy[c] = 0.5f * (dn[c] - up[c]);
      }
      accumulate_g_row(gx, gy, w, sys);
    }
    const double area = static_cast<double>(w) * w;
    if (min_eigenvalue(sys.g11, sys.g12, sys.g22) / area < cfg.min_eigenvalue) return result;

    int iters = 0;
    bool settled = false;
    for (; iters < cfg.lk_max_iters; ++iters) {
      const double qx = px + dx;
      const double qy = py + dy;
      if (qx < 0.0 || qy < 0.0 || qx > b.width - 1 || qy > b.height - 1) return result;
      const Bilinear bl = bilinear_at(qx - half, qy - half);
      const float* base = b.origin() + static_cast<std::ptrdiff_t>(bl.iy) * b.stride + bl.ix;
      sys.b1 = 0.0;
      sys.b2 = 0.0;
      for (int r = 0; r < w; ++r) {
        const float* r0 = base + static_cast<std::ptrdiff_t>(r) * b.stride;
        const float* t = s.templ.data() + static_cast<std::size_t>(r + 1) * text + 1;
        accumulate_b_row(r0, r0 + b.stride, bl, t, s.ix.data() + static_cast<std::size_t>(r) * w,
                         s.iy.data() + static_cast<std::size_t>(r) * w, w, sys);
      }
      const auto step = solve_lk_system(sys);
      if (!step) return result;
      dx += step->x;
      dy += step->y;
      if (step->x * step->x + step->y * step->y < cfg.lk_epsilon * cfg.lk_epsilon) {
        ++iters;
        settled = true;
        break;
      }
    }
    const double qx = px + dx;
    const double qy = py + dy;
    if (qx < 0.0 || qy < 0.0 || qx > b.width - 1 || qy > b.height - 1) return result;
    if (level == 0) {
      result.iterations = iters;
      if (!settled) return result;
    } else {
      dx *= 2.0;
      dy *= 2.0;
    }
  }
  result.dx = dx;
  result.dy = dy;
  result.converged = true;
  return result;
}

void check_pyramids(const Pyramid& prev, const Pyramid& next, const TrackConfig& cfg) {
  if (prev.level_count() == 0 || next.level_count() == 0) {
    throw Error(ErrorCode::InvalidArgument, "lk: empty pyramid");
  }
  if (prev.level(0).width() != next.level(0).width() ||
      prev.level(0).height() != next.level(0).height()) {
    throw Error(ErrorCode::DimensionMismatch, "lk: pyramid sizes differ");
  }
  if (cfg.lk_window > prev.window_capacity() || cfg.lk_window > next.window_capacity()) {
    throw Error(ErrorCode::InvalidArgument, "lk: window larger than the pyramid padding supports");
  }
}

}  // namespace

LkSystem lk_normal_equations(std::span<const float> ix, std::span<const float> iy,
                             std::span<const float> err, int width) {
  if (width <= 0 || ix.size() != iy.size() || ix.size() != err.size() ||
      ix.size() % static_cast<std::size_t>(width) != 0) {
    throw Error(ErrorCode::InvalidArgument, "lk_normal_equations: inconsistent window");
  }
  LkSystem sys;
  const std::size_t rows = ix.size() / width;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t o = r * width;
    accumulate_g_row(ix.data() + o, iy.data() + o, width, sys);
    float u = 0.0f;
    float v = 0.0f;
    for (int i = 0; i < width; ++i) {
      u += err[o + i] * ix[o + i];
      v += err[o + i] * iy[o + i];
    }
    sys.b1 += u;
    sys.b2 += v;
  }
  return sys;
}

std::optional<Point2> solve_lk_system(const LkSystem& sys) {
  const double det = sys.g11 * sys.g22 - sys.g12 * sys.g12;
  const double scale = std::max({std::abs(sys.g11), std::abs(sys.g22), 1e-300});
  if (!(std::abs(det) > 1e-12 * scale * scale)) return std::nullopt;
  return Point2{-(sys.g22 * sys.b1 - sys.g12 * sys.b2) / det,
                -(sys.g11 * sys.b2 - sys.g12 * sys.b1) / det};
}

std::vector<FlowVec> lk_step(const Pyramid& prev, const Pyramid& next,
                             std::span<const Point2> points, const TrackConfig& cfg) {
  check_pyramids(prev, next, cfg);
  std::vector<FlowVec> out(points.size());
  LkScratch scratch;
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[i] = track_point(prev, next, points[i], cfg, scratch);
  }
  return out;
}

std::vector<FbCheck> fb_validate(const Pyramid& prev, const Pyramid& next,
                                 std::span<const Point2> points, std::span<const FlowVec> forward,
                                 const TrackConfig& cfg) {
  if (points.size() != forward.size()) {
    throw Error(ErrorCode::InvalidArgument, "fb_validate: points and flows differ in length");
  }
  check_pyramids(prev, next, cfg);
  std::vector<FbCheck> out(points.size());
  LkScratch scratch;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!forward[i].converged) {
      out[i].rejected = true;
      continue;
    }
    const Point2 landed{points[i].x + forward[i].dx, points[i].y + forward[i].dy};
    const FlowVec back = track_point(next, prev, landed, cfg, scratch);
    if (!back.converged) {
      out[i].rejected = true;
      continue;
    }
    out[i].back_converged = true;
    out[i].error = std::hypot(landed.x + back.dx - points[i].x, landed.y + back.dy - points[i].y);
    out[i].rejected = out[i].error > cfg.fb_reject_threshold;
  }
  return out;
}

// ---------------------------------------------------------------------------
// GFTT

GrayFrame min_eigen_scores(const GrayFrame& gray) {
  const int w = gray.width();
  const int h = gray.height();
  const std::size_t n = gray.size();
  std::vector<float> gxx(n), gxy(n), gyy(n);
  for (int y = 0; y < h; ++y) {
    const float* up = gray.row(reflect_index(y - 1, h));
    const float* mid = gray.row(y);
    const float* dn = gray.row(reflect_index(y + 1, h));
    for (int x = 0; x < w; ++x) {
      const int xl = reflect_index(x - 1, w);
      const int xr = reflect_index(x + 1, w);
      const float gx = ((up[xr] + 2.0f * mid[xr] + dn[xr]) - (up[xl] + 2.0f * mid[xl] + dn[xl])) * 0.125f;
      const float gy = ((dn[xl] + 2.0f * dn[x] + dn[xr]) - (up[xl] + 2.0f * up[x] + up[xr])) * 0.125f;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      gxx[i] = gx * gx;
      gxy[i] = gx * gy;
      gyy[i] = gy * gy;
    }
  }
  // 3x3 box sums of the tensor entries.
  auto box3 = [&](const std::vector<float>& src) {
    std::vector<float> tmp(n);
    std::vector<float> out(n);
    for (int y = 0; y < h; ++y) {
      const float* r = src.data() + static_cast<std::size_t>(y) * w;
      float* o = tmp.data() + static_cast<std::size_t>(y) * w;
      for (int x = 0; x < w; ++x) o[x] = r[reflect_index(x - 1, w)] + r[x] + r[reflect_index(x + 1, w)];
    }
    for (int y = 0; y < h; ++y) {
      const float* up = tmp.data() + static_cast<std::size_t>(reflect_index(y - 1, h)) * w;
      const float* mid = tmp.data() + static_cast<std::size_t>(y) * w;
      const float* dn = tmp.data() + static_cast<std::size_t>(reflect_index(y + 1, h)) * w;
      float* o = out.data() + static_cast<std::size_t>(y) * w;
      for (int x = 0; x < w; ++x) o[x] = up[x] + mid[x] + dn[x];
    }
    return out;
  };
  const auto sxx = box3(gxx);
  const auto sxy = box3(gxy);
  const auto syy = box3(gyy);
  GrayFrame scores(w, h, 0.0f, gray.index());
  auto s = scores.data();
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = static_cast<float>(std::max(0.0, min_eigenvalue(sxx[i], sxy[i], syy[i])));
  }
  return scores;
}

KeypointSet detect_gftt(const GrayFrame& gray, const Mask& mask, const TrackConfig& cfg) {
  cfg.validate();
  if (mask.width != gray.width() || mask.height != gray.height()) {
    throw Error(ErrorCode::DimensionMismatch, "detect_gftt: mask and frame sizes differ");
  }
  const int w = gray.width();
  const int h = gray.height();
  const int margin = cfg.effective_margin(w, h);
  const GrayFrame scores = min_eigen_scores(gray);

  float best = 0.0f;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      if (mask.at(x, y)) best = std::max(best, scores.at(x, y));
    }
  }
  if (!(best > 0.0f)) throw Error(ErrorCode::NoFeatures, "no corner response inside the mask");
  const float threshold = static_cast<float>(cfg.gftt_quality) * best;

  struct Candidate {
    float score;
    int x;
    int y;
  };
  std::vector<Candidate> candidates;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const float v = scores.at(x, y);
      if (v < threshold || v <= 0.0f || !mask.at(x, y)) continue;
      bool peak = true;
      for (int dy = -1; dy <= 1 && peak; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if ((dx == 0 && dy == 0) || xx < 0 || xx >= w) continue;
          if (scores.at(xx, yy) > v) {
            peak = false;
            break;
          }
        }
      }
      if (peak) candidates.push_back({v, x, y});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  // Accepted points bucketed on a grid of min_dist cells.
  const double min_dist = cfg.gftt_min_dist;
  const double cell = std::max(1.0, min_dist);
  const int gw = static_cast<int>(std::ceil(w / cell)) + 1;
  const int gh = static_cast<int>(std::ceil(h / cell)) + 1;
  std::vector<std::vector<Point2>> grid(static_cast<std::size_t>(gw) * gh);

  auto parabola = [](double l, double c, double r) {
    const double denom = l - 2.0 * c + r;
    if (std::abs(denom) < 1e-20) return 0.0;
    return std::clamp(0.5 * (l - r) / denom, -0.5, 0.5);
  };

  KeypointSet out;
  for (const auto& cand : candidates) {
    if (static_cast<int>(out.points.size()) >= cfg.max_points) break;
    Point2 p{static_cast<double>(cand.x), static_cast<double>(cand.y)};
    if (cand.x > 0 && cand.x + 1 < w) {
      p.x += parabola(scores.at(cand.x - 1, cand.y), cand.score, scores.at(cand.x + 1, cand.y));
    }
    if (cand.y > 0 && cand.y + 1 < h) {
      p.y += parabola(scores.at(cand.x, cand.y - 1), cand.score, scores.at(cand.x, cand.y + 1));
    }
    if (p.x < margin || p.y < margin || p.x > w - 1 - margin || p.y > h - 1 - margin) continue;
    const int cx = static_cast<int>(p.x / cell);
    const int cy = static_cast<int>(p.y / cell);
    bool ok = true;
    for (int yy = std::max(0, cy - 1); yy <= std::min(gh - 1, cy + 1) && ok; ++yy) {
      for (int xx = std::max(0, cx - 1); xx <= std::min(gw - 1, cx + 1) && ok; ++xx) {
        for (const auto& q : grid[static_cast<std::size_t>(yy) * gw + xx]) {
          if ((q.x - p.x) * (q.x - p.x) + (q.y - p.y) * (q.y - p.y) < min_dist * min_dist) {
            ok = false;
            break;
          }
        }
      }
    }
    if (!ok) continue;
    grid[static_cast<std::size_t>(cy) * gw + cx].push_back(p);
    out.points.push_back(p);
    out.responses.push_back(cand.score);
  }
  if (out.points.empty()) throw Error(ErrorCode::NoFeatures, "no keypoints survived selection");
  return out;
}

// ---------------------------------------------------------------------------
// Sequence tracking

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace

TrackReport track_sequence(const FrameSequence& seq, const MarkerPattern& pattern,
                           const PreprocessConfig& pcfg, const TrackConfig& tcfg,
                           const MaskConfig& mcfg) {
  if (seq.frames.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "track_sequence needs at least two frames");
  }
  seq.validate();
  pcfg.validate();
  tcfg.validate();
  mcfg.validate();

  TrackReport report;
  report.preprocess = pcfg;
  report.track = tcfg;
  report.pattern = pattern;

  auto t0 = Clock::now();
  const PreprocessedFrame first = preprocess_pipeline(seq.frames[0], pcfg);
  report.crop_offset = first.crop_offset;
  report.frame_width = first.gray_enhanced.width();
  report.frame_height = first.gray_enhanced.height();
  MaskSelection sel = select_mask(first, pattern, mcfg);
  report.mask_stage = sel.mask.stage;
  report.mask_health = sel.health;
  if (!sel.health.passed) {
    if (!tcfg.full_frame_fallback || pattern.design == MarkerDesign::clear) {
      throw Error(ErrorCode::NoFeatures,
                  "no marker mask passed its health check (coverage " +
                      std::to_string(sel.health.coverage) + ", components " +
                      std::to_string(sel.health.component_count) + ", grid score " +
                      std::to_string(sel.health.grid_score) + ")",
                  "select_mask");
    }
    sel.mask = Mask(report.frame_width, report.frame_height, MaskStage::fallback, 1);
  }
  KeypointSet kp;
  try {
    kp = detect_gftt(first.gray_enhanced, sel.mask, tcfg);
  } catch (const Error& e) {
    throw Error(e.code(), std::string("frame 0: ") + e.what(), "detect_gftt");
  }

  report.tracks.reserve(kp.points.size());
  for (std::size_t i = 0; i < kp.points.size(); ++i) {
    TrackState s;
    s.id = static_cast<int>(i);
    s.birth = 0;
    s.positions.push_back(kp.points[i]);
    report.tracks.push_back(std::move(s));
  }
  Pyramid prev = build_pyramid(first.gray_enhanced, tcfg.pyramid_levels, tcfg.lk_window);
  report.per_frame.push_back({0, static_cast<int>(kp.points.size()), 0.0, elapsed_ms(t0)});
  const std::size_t initial = kp.points.size();

  std::vector<std::size_t> alive_idx;
  std::vector<Point2> pts;
  for (std::size_t f = 1; f < seq.frames.size(); ++f) {
    t0 = Clock::now();
    const int frame_index = static_cast<int>(f);
    const PreprocessedFrame cur = preprocess_pipeline(seq.frames[f], pcfg);
    Pyramid next = build_pyramid(cur.gray_enhanced, tcfg.pyramid_levels, tcfg.lk_window);

    alive_idx.clear();
    pts.clear();
    for (std::size_t i = 0; i < report.tracks.size(); ++i) {
      if (report.tracks[i].alive) {
        alive_idx.push_back(i);
        pts.push_back(report.tracks[i].positions.back());
      }
    }
    const auto flow = lk_step(prev, next, pts, tcfg);
    const auto fb = fb_validate(prev, next, pts, flow, tcfg);

    double fb_sum = 0.0;
    int alive = 0;
    for (std::size_t k = 0; k < alive_idx.size(); ++k) {
      TrackState& s = report.tracks[alive_idx[k]];
      if (!flow[k].converged || fb[k].rejected) {
        s.alive = false;
        s.lost_at = frame_index;
        continue;
      }
      s.positions.push_back({pts[k].x + flow[k].dx, pts[k].y + flow[k].dy});
      s.fb_errors.push_back(fb[k].error);
      fb_sum += fb[k].error;
      ++alive;
    }

    if (tcfg.redetect && static_cast<std::size_t>(alive) * 2 < initial) {
      MaskSelection cur_sel = select_mask(cur, pattern, mcfg);
      if (cur_sel.health.passed ||
          (tcfg.full_frame_fallback && pattern.design != MarkerDesign::clear)) {
        if (!cur_sel.health.passed) {
          cur_sel.mask = Mask(cur.gray_enhanced.width(), cur.gray_enhanced.height(),
                              MaskStage::fallback, 1);
        }
        // Blank out neighbourhoods of live points so new tracks do not duplicate them.
        const int r = static_cast<int>(std::ceil(tcfg.gftt_min_dist));
        for (const auto& s : report.tracks) {
          if (!s.alive) continue;
          const Point2 p = s.positions.back();
          for (int y = static_cast<int>(p.y) - r; y <= static_cast<int>(p.y) + r; ++y) {
            for (int x = static_cast<int>(p.x) - r; x <= static_cast<int>(p.x) + r; ++x) {
              if (x >= 0 && y >= 0 && x < cur_sel.mask.width && y < cur_sel.mask.height) {
                cur_sel.mask.bits[static_cast<std::size_t>(y) * cur_sel.mask.width + x] = 0;
              }
            }
          }
        }
        TrackConfig dcfg = tcfg;
        dcfg.max_points = std::max(1, tcfg.max_points - alive);
        try {
          const KeypointSet fresh = detect_gftt(cur.gray_enhanced, cur_sel.mask, dcfg);
          for (const auto& p : fresh.points) {
            TrackState s;
            s.id = static_cast<int>(report.tracks.size());
            s.birth = frame_index;
            s.positions.push_back(p);
            report.tracks.push_back(std::move(s));
            ++alive;
          }
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NoFeatures) throw;
        }
      }
    }

    const int completed = static_cast<int>(std::count_if(
        alive_idx.begin(), alive_idx.end(),
        [&](std::size_t i) { return report.tracks[i].alive; }));
    report.per_frame.push_back(
        {frame_index, alive, completed > 0 ? fb_sum / completed : 0.0, elapsed_ms(t0)});
    prev = std::move(next);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization

void to_json(nlohmann::json& j, const TrackReport& r) {
  nlohmann::json per_frame = nlohmann::json::array();
  for (const auto& f : r.per_frame) {
    per_frame.push_back({{"frame", f.frame},
                         {"alive_count", f.alive_count},
                         {"mean_fb", f.mean_fb},
                         {"time_ms", f.time_ms}});
  }
  nlohmann::json tracks = nlohmann::json::array();
  for (const auto& t : r.tracks) {
    nlohmann::json pos = nlohmann::json::array();
    for (const auto& p : t.positions) pos.push_back({p.x, p.y});
    nlohmann::json tj{{"id", t.id},
                      {"birth", t.birth},
                      {"lost_at", nullptr},
                      {"positions", std::move(pos)},
                      {"fb_errors", t.fb_errors}};
    if (t.lost_at) tj["lost_at"] = *t.lost_at;
    tracks.push_back(std::move(tj));
  }
  j = nlohmann::json{
      {"config_echo",
       {{"preprocess", r.preprocess},
        {"track", r.track},
        {"pattern", r.pattern},
        {"mask", {{"stage", r.mask_stage == MaskStage::geometry ? "geometry" : "fallback"},
                  {"health", r.mask_health}}},
        {"crop_offset", {r.crop_offset.x, r.crop_offset.y}},
        {"frame_size", {r.frame_width, r.frame_height}}}},
      {"per_frame", std::move(per_frame)},
      {"tracks", std::move(tracks)}};
}

void from_json(const nlohmann::json& j, TrackReport& r) {
  try {
    TrackReport out;
    const auto& echo = j.at("config_echo");
    out.preprocess = echo.at("preprocess").get<PreprocessConfig>();
    out.track = echo.at("track").get<TrackConfig>();
    out.pattern = echo.at("pattern").get<MarkerPattern>();
    const auto& mask = echo.at("mask");
    out.mask_stage = mask.at("stage").get<std::string>() == "geometry" ? MaskStage::geometry
                                                                       : MaskStage::fallback;
    const auto& h = mask.at("health");
    out.mask_health = {h.at("coverage").get<double>(), h.at("component_count").get<int>(),
                       h.at("grid_score").get<double>(), h.at("passed").get<bool>()};
    out.crop_offset = {echo.at("crop_offset").at(0).get<int>(),
                       echo.at("crop_offset").at(1).get<int>()};
    out.frame_width = echo.at("frame_size").at(0).get<int>();
    out.frame_height = echo.at("frame_size").at(1).get<int>();
    for (const auto& f : j.at("per_frame")) {
      out.per_frame.push_back({f.at("frame").get<int>(), f.at("alive_count").get<int>(),
                               f.at("mean_fb").get<double>(), f.at("time_ms").get<double>()});
    }
    for (const auto& t : j.at("tracks")) {
      TrackState s;
      s.id = t.at("id").get<int>();
      s.birth = t.at("birth").get<int>();
      if (!t.at("lost_at").is_null()) s.lost_at = t.at("lost_at").get<int>();
      s.alive = !s.lost_at.has_value();
      for (const auto& p : t.at("positions")) {
        s.positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      }
      s.fb_errors = t.at("fb_errors").get<std::vector<double>>();
      out.tracks.push_back(std::move(s));
    }
    r = std::move(out);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed track report: ") + e.what());
  }
}

}  // namespace magicskin
