#include "magicskin/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "json_util.hpp"
#include "magicskin/error.hpp"
#include "magicskin/gaussian.hpp"

namespace magicskin {

void PreprocessConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (!(crop_fraction >= 0.0 && crop_fraction < 0.5)) fail("crop_fraction must be in [0, 0.5)");
  if (!(clahe_clip_limit >= 1.0)) fail("clahe_clip_limit must be >= 1");
  if (clahe_tiles.cols < 1 || clahe_tiles.rows < 1) fail("clahe_tiles must be >= 1 each");
  if (!(retinex_sigma > 0.0)) fail("retinex_sigma must be > 0");
  if (!(unsharp_radius > 0.0)) fail("unsharp_radius must be > 0");
  if (!(unsharp_amount >= 0.0)) fail("unsharp_amount must be >= 0");
}

void to_json(nlohmann::json& j, const PreprocessConfig& cfg) {
  j = nlohmann::json{{"crop_fraction", cfg.crop_fraction},
                     {"retinex_sigma", cfg.retinex_sigma},
                     {"clahe_clip_limit", cfg.clahe_clip_limit},
                     {"clahe_tiles", {cfg.clahe_tiles.cols, cfg.clahe_tiles.rows}},
                     {"unsharp_radius", cfg.unsharp_radius},
                     {"unsharp_amount", cfg.unsharp_amount}};
}

void from_json(const nlohmann::json& j, PreprocessConfig& cfg) {
  constexpr std::string_view ctx = "preprocess";
  detail::check_keys(j,
                     {"crop_fraction", "retinex_sigma", "clahe_clip_limit", "clahe_tiles",
                      "unsharp_radius", "unsharp_amount"},
                     ctx);
  PreprocessConfig out;
  detail::read_optional(j, "crop_fraction", out.crop_fraction, ctx);
  detail::read_optional(j, "retinex_sigma", out.retinex_sigma, ctx);
  detail::read_optional(j, "clahe_clip_limit", out.clahe_clip_limit, ctx);
  if (j.contains("clahe_tiles")) {
    std::array<int, 2> tiles{};
    detail::read_optional(j, "clahe_tiles", tiles, ctx);
    out.clahe_tiles = {tiles[0], tiles[1]};
  }
  detail::read_optional(j, "unsharp_radius", out.unsharp_radius, ctx);
  detail::read_optional(j, "unsharp_amount", out.unsharp_amount, ctx);
  out.validate();
  cfg = out;
}

RgbPlanes RgbPlanes::from_frame(const Frame& frame) {
  RgbPlanes p;
  p.width = frame.width();
  p.height = frame.height();
  const std::size_t n = static_cast<std::size_t>(p.width) * p.height;
  const auto src = frame.data();
  for (int c = 0; c < 3; ++c) {
    auto& ch = p.channels[c];
    ch.resize(n);
    for (std::size_t i = 0; i < n; ++i) ch[i] = static_cast<float>(src[3 * i + c]);
  }
  return p;
}

Frame RgbPlanes::to_frame(int index) const {
  Frame out(width, height, index);
  auto dst = out.data();
  const std::size_t n = static_cast<std::size_t>(width) * height;
  for (int c = 0; c < 3; ++c) {
    const auto& ch = channels[c];
    for (std::size_t i = 0; i < n; ++i) {
      dst[3 * i + c] = static_cast<std::uint8_t>(std::lround(std::clamp(ch[i], 0.0f, 255.0f)));
    }
  }
  return out;
}

CropResult crop_border(const Frame& frame, double fraction) {
  if (!(fraction >= 0.0 && fraction < 0.5)) {
    throw Error(ErrorCode::InvalidArgument, "crop fraction must be in [0, 0.5)");
  }
  const int ox = static_cast<int>(std::floor(fraction * frame.width()));
  const int oy = static_cast<int>(std::floor(fraction * frame.height()));
  const int w = frame.width() - 2 * ox;
  const int h = frame.height() - 2 * oy;
  if (w < 16 || h < 16) {
    throw Error(ErrorCode::DegenerateResult, "cropping leaves " + std::to_string(w) + "x" +
                                                 std::to_string(h) + " (< 16 px)");
  }
  if (ox == 0 && oy == 0) return {frame, {0, 0}};
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h * 3);
  const auto src = frame.data();
  for (int y = 0; y < h; ++y) {
    const auto* row = src.data() + (static_cast<std::size_t>(y + oy) * frame.width() + ox) * 3;
    std::copy(row, row + static_cast<std::size_t>(w) * 3,
              data.begin() + static_cast<std::ptrdiff_t>(y) * w * 3);
  }
  return {Frame(w, h, std::move(data), frame.index()), {ox, oy}};
}

void gray_world_balance(RgbPlanes& planes) {
  std::array<double, 3> mean{};
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (float v : planes.channels[c]) sum += v;
    mean[c] = sum / static_cast<double>(planes.channels[c].size());
  }
  for (int c = 0; c < 3; ++c) {
    if (mean[c] < 1e-6) {
      throw Error(ErrorCode::ZeroChannel,
                  "channel " + std::to_string(c) + " has zero mean; gray-world gain undefined");
    }
  }
  const double gray = (mean[0] + mean[1] + mean[2]) / 3.0;
  for (int c = 0; c < 3; ++c) {
    const auto gain = static_cast<float>(gray / mean[c]);
    for (float& v : planes.channels[c]) v = std::clamp(v * gain, 0.0f, 255.0f);
  }
}

Frame gray_world_balance(const Frame& frame) {
  auto planes = RgbPlanes::from_frame(frame);
  gray_world_balance(planes);
  return planes.to_frame(frame.index());
}

void retinex_normalize(RgbPlanes& planes, double sigma) {
  const std::size_t n = static_cast<std::size_t>(planes.width) * planes.height;
  std::vector<float> blurred(n);
  for (auto& ch : planes.channels) {
    gaussian_blur_wide(ch, blurred, planes.width, planes.height, sigma);
    // log(I+1) - log(G*I+1), evaluated as a single log of the ratio.
    float lo = std::numeric_limits<float>::max();
    float hi = std::numeric_limits<float>::lowest();
    for (std::size_t i = 0; i < n; ++i) {
      const float r = std::log((ch[i] + 1.0f) / (blurred[i] + 1.0f));
      ch[i] = r;
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    if (hi - lo <= 1e-6f) {
      std::fill(ch.begin(), ch.end(), 128.0f);
      continue;
    }
    const float scale = 255.0f / (hi - lo);
    for (std::size_t i = 0; i < n; ++i) ch[i] = (ch[i] - lo) * scale;
  }
}

Frame retinex_normalize(const Frame& frame, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "retinex sigma must be > 0");
  auto planes = RgbPlanes::from_frame(frame);
  retinex_normalize(planes, sigma);
  return planes.to_frame(frame.index());
}

namespace {

struct TileAxis {
  std::vector<int> start;  // size count+1, start[count] == extent
  std::vector<double> center;
};

TileAxis make_axis(int extent, int count) {
  TileAxis a;
  a.start.resize(count + 1);
  a.center.resize(count);
  for (int i = 0; i <= count; ++i) a.start[i] = static_cast<int>(static_cast<long long>(i) * extent / count);
  for (int i = 0; i < count; ++i) a.center[i] = (a.start[i] + a.start[i + 1] - 1) / 2.0;
  return a;
}

// Neighbouring tile indices and the weight of the second one for coordinate p.
struct Interp {
  int i0;
  int i1;
  double w;
};

Interp locate(const TileAxis& axis, int p) {
  const int n = static_cast<int>(axis.center.size());
  if (p <= axis.center.front()) return {0, 0, 0.0};
  if (p >= axis.center.back()) return {n - 1, n - 1, 0.0};
  int i = 0;
  while (axis.center[i + 1] <= p) ++i;
  return {i, i + 1, (p - axis.center[i]) / (axis.center[i + 1] - axis.center[i])};
}

}  // namespace

GrayFrame clahe(const GrayFrame& gray, double clip_limit, TileGrid tiles) {
  if (!(clip_limit >= 1.0)) throw Error(ErrorCode::InvalidArgument, "CLAHE clip limit must be >= 1");
  if (tiles.cols < 1 || tiles.rows < 1) {
    throw Error(ErrorCode::InvalidArgument, "CLAHE tile counts must be >= 1");
  }
  const int w = gray.width();
  const int h = gray.height();
  const TileAxis ax = make_axis(w, tiles.cols);
  const TileAxis ay = make_axis(h, tiles.rows);
  for (int i = 0; i < tiles.cols; ++i) {
    if (ax.start[i + 1] - ax.start[i] < 2) {
      throw Error(ErrorCode::TileTooSmall, "CLAHE tile narrower than 2 px");
    }
  }
  for (int i = 0; i < tiles.rows; ++i) {
    if (ay.start[i + 1] - ay.start[i] < 2) {
      throw Error(ErrorCode::TileTooSmall, "CLAHE tile shorter than 2 px");
    }
  }

  const std::size_t n = gray.size();
  std::vector<std::uint8_t> bins(n);
  const auto src = gray.data();
  for (std::size_t i = 0; i < n; ++i) {
    bins[i] = static_cast<std::uint8_t>(
        std::lround(std::clamp(static_cast<double>(src[i]), 0.0, 1.0) * 255.0));
  }

  // Per-tile mapping tables.
  std::vector<std::array<double, 256>> lut(static_cast<std::size_t>(tiles.cols) * tiles.rows);
  for (int ty = 0; ty < tiles.rows; ++ty) {
    for (int tx = 0; tx < tiles.cols; ++tx) {
      std::array<long long, 256> hist{};
      for (int y = ay.start[ty]; y < ay.start[ty + 1]; ++y) {
        const std::uint8_t* row = bins.data() + static_cast<std::size_t>(y) * w;
        for (int x = ax.start[tx]; x < ax.start[tx + 1]; ++x) ++hist[row[x]];
      }
      const double area = static_cast<double>(ax.start[tx + 1] - ax.start[tx]) *
                          static_cast<double>(ay.start[ty + 1] - ay.start[ty]);
      const double clip = clip_limit * (area / 256.0);
      double excess = 0.0;
      for (int b = 0; b < 256; ++b) {
        const double hb = static_cast<double>(hist[b]);
        if (hb > clip) excess += hb - clip;
      }
      const double share = excess / 256.0;
      auto& table = lut[static_cast<std::size_t>(ty) * tiles.cols + tx];
      double cdf = 0.0;
      for (int b = 0; b < 256; ++b) {
        cdf += std::min(static_cast<double>(hist[b]), clip) + share;
        table[b] = cdf / area;
      }
    }
  }

  std::vector<Interp> col_interp(w);
  for (int x = 0; x < w; ++x) col_interp[x] = locate(ax, x);

  GrayFrame out(w, h, 0.0f, gray.index());
  for (int y = 0; y < h; ++y) {
    const Interp iy = locate(ay, y);
    const auto* row0 = lut.data() + static_cast<std::size_t>(iy.i0) * tiles.cols;
    const auto* row1 = lut.data() + static_cast<std::size_t>(iy.i1) * tiles.cols;
    const std::uint8_t* brow = bins.data() + static_cast<std::size_t>(y) * w;
    float* orow = out.row(y);
    for (int x = 0; x < w; ++x) {
      const Interp& ix = col_interp[x];
      const int b = brow[x];
      const double top = (1.0 - ix.w) * row0[ix.i0][b] + ix.w * row0[ix.i1][b];
      const double bot = (1.0 - ix.w) * row1[ix.i0][b] + ix.w * row1[ix.i1][b];
      const double v = (1.0 - iy.w) * top + iy.w * bot;
      orow[x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

GrayFrame unsharp_mask(const GrayFrame& gray, double radius, double amount) {
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "unsharp radius must be > 0");
  if (!(amount >= 0.0)) throw Error(ErrorCode::InvalidArgument, "unsharp amount must be >= 0");
  if (amount == 0.0) return gray;
  const GrayFrame blurred = gaussian_blur(gray, radius);
  GrayFrame out(gray.width(), gray.height(), 0.0f, gray.index());
  const auto g = gray.data();
  const auto b = blurred.data();
  auto o = out.data();
  const auto a = static_cast<float>(amount);
  for (std::size_t i = 0; i < g.size(); ++i) {
    o[i] = std::clamp(g[i] + a * (g[i] - b[i]), 0.0f, 1.0f);
  }
  return out;
}

namespace {

template <typename F>
auto run_stage(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(stage) + ": " + e.what(), stage);
  }
}

GrayFrame luma_plane(const RgbPlanes& planes, int index) {
  GrayFrame out(planes.width, planes.height, 0.0f, index);
  auto o = out.data();
  const auto& r = planes.channels[0];
  const auto& g = planes.channels[1];
  const auto& b = planes.channels[2];
  for (std::size_t i = 0; i < o.size(); ++i) {
    const float v = (0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i]) * (1.0f / 255.0f);
    o[i] = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

template <typename Sink>
void run_pipeline(const Frame& frame, const PreprocessConfig& cfg, Sink&& sink) {
  run_stage("config", [&] {
    cfg.validate();
    return 0;
  });
  CropResult crop = run_stage("crop_border", [&] { return crop_border(frame, cfg.crop_fraction); });
  sink.cropped(crop);
  RgbPlanes planes = RgbPlanes::from_frame(crop.frame);
  run_stage("gray_world_balance", [&] {
    gray_world_balance(planes);
    return 0;
  });
  sink.balanced(planes);
  run_stage("retinex_normalize", [&] {
    retinex_normalize(planes, cfg.retinex_sigma);
    return 0;
  });
  sink.retinex(planes);
  GrayFrame gray = luma_plane(planes, frame.index());
  sink.gray(gray);
  GrayFrame eq = run_stage("clahe", [&] {
    return clahe(gray, cfg.clahe_clip_limit, cfg.clahe_tiles);
  });
  sink.clahe(eq);
  GrayFrame sharp = run_stage("unsharp_mask", [&] {
    return unsharp_mask(eq, cfg.unsharp_radius, cfg.unsharp_amount);
  });
  sink.enhanced(std::move(sharp));
}

}  // namespace

PreprocessedFrame preprocess_pipeline(const Frame& frame, const PreprocessConfig& cfg) {
  struct Sink {
    PreprocessedFrame out;
    int index;
    void cropped(const CropResult& c) { out.crop_offset = c.offset; }
    void balanced(const RgbPlanes&) {}
    void retinex(const RgbPlanes& p) { out.color = p.to_frame(index); }
    void gray(const GrayFrame&) {}
    void clahe(const GrayFrame&) {}
    void enhanced(GrayFrame g) { out.gray_enhanced = std::move(g); }
  } sink{{}, frame.index()};
  run_pipeline(frame, cfg, sink);
  return std::move(sink.out);
}

PipelineStages preprocess_stages(const Frame& frame, const PreprocessConfig& cfg) {
  struct Sink {
    PipelineStages s;
    int index;
    void cropped(const CropResult& c) {
      s.cropped = c.frame;
      s.crop_offset = c.offset;
    }
    void balanced(const RgbPlanes& p) { s.balanced = p.to_frame(index); }
    void retinex(const RgbPlanes& p) { s.retinex = p.to_frame(index); }
    void gray(const GrayFrame& g) { s.gray = g; }
    void clahe(const GrayFrame& g) { s.clahe = g; }
    void enhanced(GrayFrame g) { s.enhanced = std::move(g); }
  } sink{{}, frame.index()};
  sink.s.input = frame;
  run_pipeline(frame, cfg, sink);
  return std::move(sink.s);
}

}  // namespace magicskin
