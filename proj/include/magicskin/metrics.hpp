#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "magicskin/simulate.hpp"
#include "magicskin/track.hpp"

namespace magicskin {

/// How forward-backward errors are pooled into one distribution.
enum class FbPooling {
  per_step,   // every per-point per-step error is one sample
  per_point,  // each point's mean error is one sample
};

struct TrackingMetrics {
  double fb_mean = 0.0;  // px
  double fb_std = 0.0;   // population standard deviation
  double fb_min = 0.0;
  double fb_max = 0.0;
  double retention = 0.0;  // percent of the frame-0 set alive at the end
  long n_points_initial = 0;
  long n_points_final = 0;
  long n_frames = 0;
  long n_fb_samples = 0;
};

void to_json(nlohmann::json& j, const TrackingMetrics& m);
void from_json(const nlohmann::json& j, TrackingMetrics& m);

/// Pools several reports (e.g. every sequence of one design). Samples are
/// appended in report order, then track order, then step order.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(FbPooling pooling = FbPooling::per_step) : pooling_(pooling) {}

  /// Throws EmptyReport when the report has no completed step or no initial points.
  void add(const TrackReport& report);
  /// Throws EmptyReport when nothing was added.
  [[nodiscard]] TrackingMetrics result() const;
  [[nodiscard]] std::span<const double> samples() const noexcept { return samples_; }

 private:
  FbPooling pooling_;
  std::vector<double> samples_;
  long initial_ = 0;
  long final_ = 0;
  long frames_ = 0;
  int reports_ = 0;
};

[[nodiscard]] TrackingMetrics compute_metrics(const TrackReport& report,
                                              FbPooling pooling = FbPooling::per_step);
[[nodiscard]] TrackingMetrics compute_metrics(std::span<const TrackReport> reports,
                                              FbPooling pooling = FbPooling::per_step);

struct ErrorSummary {
  double median_abs_err = 0.0;  // px
  double p95_abs_err = 0.0;
  long n_samples = 0;
};

struct AccuracyMetrics {
  double median_abs_err = 0.0;
  double p95_abs_err = 0.0;
  long n_samples = 0;
  std::map<std::string, ErrorSummary> per_motion;
};

void to_json(nlohmann::json& j, const AccuracyMetrics& m);

/// Linear-interpolated percentile (p in [0,100]) of unsorted values.
[[nodiscard]] double percentile(std::vector<double> values, double p);

/// Displacement errors of every alive point at every frame after its birth,
/// measured against the truth at the point's material location.
[[nodiscard]] std::vector<double> displacement_errors(const TrackReport& report,
                                                      const GroundTruth& truth);

class AccuracyAccumulator {
 public:
  /// Throws SequenceMismatch when frame counts differ.
  void add(const TrackReport& report, const GroundTruth& truth);
  [[nodiscard]] AccuracyMetrics result() const;

 private:
  std::map<std::string, std::vector<double>> errors_;
};

[[nodiscard]] AccuracyMetrics compute_accuracy(const TrackReport& report, const GroundTruth& truth);

struct ComparisonRow {
  std::string design;
  TrackingMetrics metrics;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;  // input order

  /// Design names by descending retention (ties keep input order).
  [[nodiscard]] std::vector<std::string> ranking() const;
  /// True when retention strictly decreases along `designs_desc`. Always true
  /// for fewer than two rows.
  [[nodiscard]] bool retention_strictly_ordered(const std::vector<std::string>& designs_desc) const;

  [[nodiscard]] std::string to_csv(int fb_decimals = 3, int retention_decimals = 1) const;
  [[nodiscard]] std::string to_text(int fb_decimals = 3, int retention_decimals = 1) const;
};

void to_json(nlohmann::json& j, const ComparisonTable& t);

inline constexpr const char* kComparisonCsvHeader =
    "design,mean_fb_px,std_fb_px,min_fb_px,max_fb_px,retention_pct";

[[nodiscard]] ComparisonTable compare_designs(const std::vector<ComparisonRow>& rows);

}  // namespace magicskin
