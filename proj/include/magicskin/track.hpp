#pragma once

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "magicskin/mask.hpp"
#include "magicskin/pattern.hpp"
#include "magicskin/preprocess.hpp"
#include "magicskin/raster.hpp"

namespace magicskin {

struct TrackConfig {
  int max_points = 1000;
  double gftt_quality = 0.01;
  double gftt_min_dist = 7.0;
  int lk_window = 155;  // odd, level-0 window side
  int pyramid_levels = 3;
  int lk_max_iters = 30;
  double lk_epsilon = 0.01;  // px, at the level being refined
  double fb_reject_threshold = std::numeric_limits<double>::infinity();
  std::optional<int> border_margin;  // default: half window, clamped to the frame
  /// Minimum eigenvalue of the window-averaged structure tensor below which a
  /// point is declared unconverged.
  double min_eigenvalue = 1e-6;
  /// Re-detect features when fewer than half the initial set survives.
  bool redetect = false;
  /// Detect over the whole frame when no mask passes its health check instead
  /// of failing with NoFeatures. Markerless patterns always fail.
  bool full_frame_fallback = true;

  void validate() const;
  /// Margin actually applied for a frame of the given size.
  [[nodiscard]] int effective_margin(int width, int height) const;
  /// Window side used at pyramid level `level`: lk_window at level 0, halved per
  /// level with a floor of 15 (or lk_window when smaller), forced odd.
  [[nodiscard]] int window_at_level(int level) const;
};

void to_json(nlohmann::json& j, const TrackConfig& cfg);
void from_json(const nlohmann::json& j, TrackConfig& cfg);

struct KeypointSet {
  std::vector<Point2> points;
  std::vector<double> responses;  // min-eigenvalue score, descending
};

/// Gaussian pyramid. Levels are stored both as plain rasters and as
/// replicate-padded copies so window sampling needs no bounds checks.
class Pyramid {
 public:
  Pyramid() = default;

  [[nodiscard]] int level_count() const noexcept { return static_cast<int>(levels_.size()); }
  [[nodiscard]] const GrayFrame& level(int i) const { return levels_.at(i); }
  [[nodiscard]] const std::vector<GrayFrame>& levels() const noexcept { return levels_; }
  [[nodiscard]] int requested_levels() const noexcept { return requested_; }
  [[nodiscard]] bool clamped() const noexcept { return requested_ != level_count(); }
  /// Largest window side the padding supports at level 0.
  [[nodiscard]] int window_capacity() const noexcept { return window_capacity_; }

  struct Padded {
    int width = 0;
    int height = 0;
    int pad = 0;
    int stride = 0;
    std::vector<float> data;
    /// Pointer to pixel (0,0).
    [[nodiscard]] const float* origin() const noexcept {
      return data.data() + static_cast<std::size_t>(pad) * stride + pad;
    }
  };
  [[nodiscard]] const Padded& padded(int i) const { return padded_.at(i); }

 private:
  friend Pyramid build_pyramid(const GrayFrame&, int, int);
  std::vector<GrayFrame> levels_;
  std::vector<Padded> padded_;
  int requested_ = 0;
  int window_capacity_ = 0;
};

/// Builds `levels` levels (blur sigma=1 then 2x decimation, sizes rounded up).
/// Levels whose smaller side would drop below 16 px are dropped.
[[nodiscard]] Pyramid build_pyramid(const GrayFrame& gray, int levels, int window_capacity = 155);

struct FlowVec {
  double dx = 0.0;
  double dy = 0.0;
  bool converged = false;
  int iterations = 0;  // at level 0
};

struct FbCheck {
  double error = std::numeric_limits<double>::infinity();
  bool back_converged = false;
  bool rejected = false;  // true when not usable (backward failure or above threshold)
};

/// Shi-Tomasi detection restricted to `mask` and the border margin.
[[nodiscard]] KeypointSet detect_gftt(const GrayFrame& gray, const Mask& mask,
                                      const TrackConfig& cfg);

/// Per-pixel min-eigenvalue score (3x3 Sobel, 3x3 structure-tensor window).
[[nodiscard]] GrayFrame min_eigen_scores(const GrayFrame& gray);

[[nodiscard]] std::vector<FlowVec> lk_step(const Pyramid& prev, const Pyramid& next,
                                           std::span<const Point2> points, const TrackConfig& cfg);

/// Tracks each landed point back from `next` to `prev`. Points whose forward
/// flow did not converge get an infinite error and are rejected.
[[nodiscard]] std::vector<FbCheck> fb_validate(const Pyramid& prev, const Pyramid& next,
                                               std::span<const Point2> points,
                                               std::span<const FlowVec> forward,
                                               const TrackConfig& cfg);

/// 2x2 Lucas-Kanade normal equations over one window.
struct LkSystem {
  double g11 = 0.0;
  double g12 = 0.0;
  double g22 = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
};

/// Accumulates G = sum [ix^2 ix*iy; ix*iy iy^2] and b = sum err*[ix; iy] over a
/// `width`-wide row-major window, with the same arithmetic the tracker uses.
[[nodiscard]] LkSystem lk_normal_equations(std::span<const float> ix, std::span<const float> iy,
                                           std::span<const float> err, int width);

/// Solves G * step = -b. Returns nullopt when G is singular.
[[nodiscard]] std::optional<Point2> solve_lk_system(const LkSystem& sys);

/// Smaller eigenvalue of the symmetric 2x2 G.
[[nodiscard]] double min_eigenvalue(double g11, double g12, double g22) noexcept;

struct TrackState {
  int id = 0;
  int birth = 0;
  std::vector<Point2> positions;  // frames [birth, lost_at) in order
  bool alive = true;
  std::vector<double> fb_errors;  // one per completed step while alive
  std::optional<int> lost_at;
};

struct FrameStats {
  int frame = 0;
  int alive_count = 0;
  double mean_fb = 0.0;  // 0 for frame 0 and for frames with no alive points
  double time_ms = 0.0;
};

struct TrackReport {
  PreprocessConfig preprocess;
  TrackConfig track;
  MarkerPattern pattern;
  MaskStage mask_stage = MaskStage::geometry;
  MaskHealth mask_health;
  PixelOffset crop_offset;
  int frame_width = 0;   // cropped raster size
  int frame_height = 0;
  std::vector<FrameStats> per_frame;
  std::vector<TrackState> tracks;

  [[nodiscard]] int frame_count() const noexcept { return static_cast<int>(per_frame.size()); }
};

void to_json(nlohmann::json& j, const TrackReport& report);
void from_json(const nlohmann::json& j, TrackReport& report);

/// Frame 0: preprocess, select mask, detect. Later frames: preprocess, LK,
/// forward-backward check, update states. Throws NoFeatures when frame 0 has
/// nothing to track, which includes any markerless pattern.
[[nodiscard]] TrackReport track_sequence(const FrameSequence& seq, const MarkerPattern& pattern,
                                         const PreprocessConfig& pcfg, const TrackConfig& tcfg,
                                         const MaskConfig& mcfg = {});

}  // namespace magicskin
