#include "magicskin/mask.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "magicskin/gaussian.hpp"

namespace magicskin {

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(),
                                                [](std::uint8_t b) { return b != 0; }));
}

void MaskConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, "mask: " + what); };
  if (!(coverage_min >= 0.0 && coverage_min < coverage_max && coverage_max <= 1.0)) {
    fail("need 0 <= coverage_min < coverage_max <= 1");
  }
  if (!(component_tolerance >= 1.0)) fail("component_tolerance must be >= 1");
  if (!(grid_score_min >= 0.0 && grid_score_min <= 1.0)) fail("grid_score_min must be in [0,1]");
  if (!(adaptive_k >= 0.0)) fail("adaptive_k must be >= 0");
  if (!(window_pitches > 0.0)) fail("window_pitches must be > 0");
  if (!(presmooth >= 0.0)) fail("presmooth must be >= 0");
  if (!(cell_side_min >= 0.0 && cell_side_min <= cell_side_max)) {
    fail("need 0 <= cell_side_min <= cell_side_max");
  }
  if (!(cell_fill_min >= 0.0 && cell_fill_min <= 1.0)) fail("cell_fill_min must be in [0,1]");
}

void to_json(nlohmann::json& j, const MaskConfig& c) {
  j = nlohmann::json{{"coverage_min", c.coverage_min},
                     {"coverage_max", c.coverage_max},
                     {"component_tolerance", c.component_tolerance},
                     {"grid_score_min", c.grid_score_min},
                     {"adaptive_k", c.adaptive_k},
                     {"window_pitches", c.window_pitches},
                     {"presmooth", c.presmooth},
                     {"cell_side_min", c.cell_side_min},
                     {"cell_side_max", c.cell_side_max},
                     {"cell_fill_min", c.cell_fill_min}};
}

void from_json(const nlohmann::json& j, MaskConfig& c) {
  constexpr std::string_view ctx = "mask";
  detail::check_keys(j,
                     {"coverage_min", "coverage_max", "component_tolerance", "grid_score_min",
                      "adaptive_k", "window_pitches", "presmooth", "cell_side_min",
                      "cell_side_max", "cell_fill_min"},
                     ctx);
  MaskConfig out;
  detail::read_optional(j, "coverage_min", out.coverage_min, ctx);
  detail::read_optional(j, "coverage_max", out.coverage_max, ctx);
  detail::read_optional(j, "component_tolerance", out.component_tolerance, ctx);
  detail::read_optional(j, "grid_score_min", out.grid_score_min, ctx);
  detail::read_optional(j, "adaptive_k", out.adaptive_k, ctx);
  detail::read_optional(j, "window_pitches", out.window_pitches, ctx);
  detail::read_optional(j, "presmooth", out.presmooth, ctx);
  detail::read_optional(j, "cell_side_min", out.cell_side_min, ctx);
  detail::read_optional(j, "cell_side_max", out.cell_side_max, ctx);
  detail::read_optional(j, "cell_fill_min", out.cell_fill_min, ctx);
  out.validate();
  c = out;
}

void to_json(nlohmann::json& j, const MaskHealth& h) {
  j = nlohmann::json{{"coverage", h.coverage},
                     {"component_count", h.component_count},
                     {"grid_score", h.grid_score},
                     {"passed", h.passed}};
}

namespace {

// 3x3 min (erode) or max (dilate); out-of-bounds neighbours are ignored.
void morph3(Mask& mask, bool erode) {
  const int w = mask.width;
  const int h = mask.height;
  std::vector<std::uint8_t> tmp(mask.bits.size());
  // Horizontal then vertical: a 3x3 box is separable for min/max.
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* in = mask.bits.data() + static_cast<std::size_t>(y) * w;
    std::uint8_t* out = tmp.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = in[x];
      if (x > 0) v = erode ? std::min(v, in[x - 1]) : std::max(v, in[x - 1]);
      if (x + 1 < w) v = erode ? std::min(v, in[x + 1]) : std::max(v, in[x + 1]);
      out[x] = v;
    }
  }
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* c = tmp.data() + static_cast<std::size_t>(y) * w;
    const std::uint8_t* up = y > 0 ? c - w : c;
    const std::uint8_t* dn = y + 1 < h ? c + w : c;
    std::uint8_t* out = mask.bits.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      out[x] = erode ? std::min({c[x], up[x], dn[x]}) : std::max({c[x], up[x], dn[x]});
    }
  }
}

// Inclusive-exclusive integral image with one row/col of zero padding.
struct Integral {
  int w;
  int h;
  std::vector<double> sum;
  std::vector<double> sq;

  explicit Integral(const GrayFrame& g) : w(g.width()), h(g.height()) {
    sum.assign(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
    sq.assign(sum.size(), 0.0);
    for (int y = 0; y < h; ++y) {
      double rs = 0.0;
      double rq = 0.0;
      const float* row = g.row(y);
      for (int x = 0; x < w; ++x) {
        rs += row[x];
        rq += static_cast<double>(row[x]) * row[x];
        const std::size_t i = static_cast<std::size_t>(y + 1) * (w + 1) + x + 1;
        sum[i] = sum[i - (w + 1)] + rs;
        sq[i] = sq[i - (w + 1)] + rq;
      }
    }
  }

  [[nodiscard]] double box(const std::vector<double>& t, int x0, int y0, int x1, int y1) const {
    const auto at = [&](int x, int y) { return t[static_cast<std::size_t>(y) * (w + 1) + x]; };
    return at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
  }
};

double projection_peak(const std::vector<double>& proj, double pitch) {
  const int n = static_cast<int>(proj.size());
  double mean = 0.0;
  for (double v : proj) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : proj) var += (v - mean) * (v - mean);
  if (var <= 1e-12) return 0.0;
  const int lo = std::max(1, static_cast<int>(std::floor(0.9 * pitch)));
  const int hi = std::min(n - 1, static_cast<int>(std::ceil(1.1 * pitch)));
  double best = 0.0;
  for (int lag = lo; lag <= hi; ++lag) {
    double acc = 0.0;
    for (int i = 0; i + lag < n; ++i) acc += (proj[i] - mean) * (proj[i + lag] - mean);
    best = std::max(best, acc / var);
  }
  return std::clamp(best, 0.0, 1.0);
}

}  // namespace

void morph_open(Mask& mask) {
  morph3(mask, true);
  morph3(mask, false);
}

void morph_close(Mask& mask) {
  morph3(mask, false);
  morph3(mask, true);
}

namespace {

// Visits every 8-connected component; `on_component` receives its pixel indices.
template <typename Fn>
int for_each_component(const Mask& mask, Fn&& on_component) {
  const int w = mask.width;
  const int h = mask.height;
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<int> stack;
  std::vector<int> pixels;
  int count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t start = static_cast<std::size_t>(y) * w + x;
      if (mask.bits[start] == 0 || seen[start] != 0) continue;
      ++count;
      seen[start] = 1;
      stack.push_back(static_cast<int>(start));
      pixels.clear();
      while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        pixels.push_back(idx);
        const int cx = idx % w;
        const int cy = idx / w;
        for (int dy = -1; dy <= 1; ++dy) {
          const int ny = cy + dy;
          if (ny < 0 || ny >= h) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx;
            if (nx < 0 || nx >= w) continue;
            const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
            if (mask.bits[n] != 0 && seen[n] == 0) {
              seen[n] = 1;
              stack.push_back(static_cast<int>(n));
            }
          }
        }
      }
      on_component(pixels);
    }
  }
  return count;
}

}  // namespace

int count_components(const Mask& mask) {
  return for_each_component(mask, [](const std::vector<int>&) {});
}

void filter_cells(Mask& mask, const CellShape& shape) {
  std::vector<int> doomed;
  const int w = mask.width;
  for_each_component(mask, [&](const std::vector<int>& px) {
    int x0 = w;
    int x1 = -1;
    int y0 = mask.height;
    int y1 = -1;
    for (int i : px) {
      x0 = std::min(x0, i % w);
      x1 = std::max(x1, i % w);
      y0 = std::min(y0, i / w);
      y1 = std::max(y1, i / w);
    }
    const double bw = x1 - x0 + 1;
    const double bh = y1 - y0 + 1;
    const double fill = static_cast<double>(px.size()) / (bw * bh);
    const bool ok = bw >= shape.side_min && bw <= shape.side_max && bh >= shape.side_min &&
                    bh <= shape.side_max && fill >= shape.fill_min;
    if (!ok) doomed.insert(doomed.end(), px.begin(), px.end());
  });
  for (int i : doomed) mask.bits[static_cast<std::size_t>(i)] = 0;
}

double grid_score(const Mask& mask, double pitch_px) {
  std::vector<double> cols(mask.width, 0.0);
  std::vector<double> rows(mask.height, 0.0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y)) {
        cols[x] += 1.0;
        rows[y] += 1.0;
      }
    }
  }
  return 0.5 * (projection_peak(cols, pitch_px) + projection_peak(rows, pitch_px));
}

int otsu_threshold(const GrayFrame& gray) {
  std::array<double, 256> hist{};
  for (float v : gray.data()) {
    ++hist[static_cast<std::size_t>(
        std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0))];
  }
  const double total = static_cast<double>(gray.size());
  double sum_all = 0.0;
  for (int b = 0; b < 256; ++b) sum_all += b * hist[b];
  double w0 = 0.0;
  double sum0 = 0.0;
  double best = -1.0;
  int best_t = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    const double w1 = total - w0;
    if (w0 <= 0.0 || w1 <= 0.0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

Mask geometry_mask(const PreprocessedFrame& pre, const MarkerPattern& pattern,
                   const MaskConfig& cfg) {
  const double sigma = cfg.presmooth * pattern.square_px();
  const GrayFrame g = sigma > 0.0 ? gaussian_blur(pre.gray_enhanced, sigma) : pre.gray_enhanced;
  const int w = g.width();
  const int h = g.height();
  Mask mask(w, h, MaskStage::geometry);
  const Integral integral(g);
  const int half = std::max(1, static_cast<int>(std::lround(cfg.window_pitches * pattern.pitch_px() / 2.0)));
  const bool dark = pattern.cells_are_dark();
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - half);
    const int y1 = std::min(h, y + half + 1);
    const float* row = g.row(y);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - half);
      const int x1 = std::min(w, x + half + 1);
      const double n = static_cast<double>(x1 - x0) * (y1 - y0);
      const double mean = integral.box(integral.sum, x0, y0, x1, y1) / n;
      const double var = std::max(0.0, integral.box(integral.sq, x0, y0, x1, y1) / n - mean * mean);
      const double offset = cfg.adaptive_k * std::sqrt(var);
      const double v = row[x];
      const bool on = dark ? v < mean - offset : v > mean + offset;
      mask.bits[static_cast<std::size_t>(y) * w + x] = on ? 1 : 0;
    }
  }
  morph_open(mask);
  morph_close(mask);
  const double side = pattern.square_px();
  filter_cells(mask, {cfg.cell_side_min * side, cfg.cell_side_max * side, cfg.cell_fill_min});
  return mask;
}

Mask fallback_mask(const PreprocessedFrame& pre, Phase phase) {
  const GrayFrame& g = pre.gray_enhanced;
  const int t = otsu_threshold(g);
  Mask mask(g.width(), g.height(), MaskStage::fallback);
  const auto data = g.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const long bin = std::lround(std::clamp(static_cast<double>(data[i]), 0.0, 1.0) * 255.0);
    const bool is_dark = bin <= t;
    mask.bits[i] = (phase == Phase::dark) == is_dark ? 1 : 0;
  }
  morph_open(mask);
  morph_close(mask);
  return mask;
}

MaskHealth mask_health(const Mask& mask, const MarkerPattern& pattern, const MaskConfig& cfg) {
  MaskHealth health;
  const double total = static_cast<double>(mask.bits.size());
  health.coverage = total > 0 ? static_cast<double>(mask.count()) / total : 0.0;
  health.component_count = count_components(mask);
  health.grid_score = grid_score(mask, pattern.pitch_px());
  const double expected = pattern.expected_cells();
  const bool coverage_ok = health.coverage >= cfg.coverage_min && health.coverage <= cfg.coverage_max;
  const bool count_ok = health.component_count >= expected / cfg.component_tolerance &&
                        health.component_count <= expected * cfg.component_tolerance;
  health.passed = coverage_ok && count_ok && health.grid_score >= cfg.grid_score_min;
  return health;
}

MaskSelection select_mask(const PreprocessedFrame& pre, const MarkerPattern& pattern,
                          const MaskConfig& cfg) {
  Mask geo = geometry_mask(pre, pattern, cfg);
  const MaskHealth geo_health = mask_health(geo, pattern, cfg);
  if (geo_health.passed) return {std::move(geo), geo_health, geo_health};
  Mask fb = fallback_mask(pre, pattern.cells_are_dark() ? Phase::dark : Phase::bright);
  const MaskHealth fb_health = mask_health(fb, pattern, cfg);
  return {std::move(fb), fb_health, geo_health};
}

}  // namespace magicskin
