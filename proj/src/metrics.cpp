#include "magicskin/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "magicskin/error.hpp"

namespace magicskin {

void to_json(nlohmann::json& j, const TrackingMetrics& m) {
  j = nlohmann::json{{"fb_mean", m.fb_mean},
                     {"fb_std", m.fb_std},
                     {"fb_min", m.fb_min},
                     {"fb_max", m.fb_max},
                     {"retention", m.retention},
                     {"n_points_initial", m.n_points_initial},
                     {"n_points_final", m.n_points_final},
                     {"n_frames", m.n_frames},
                     {"n_fb_samples", m.n_fb_samples}};
}

void from_json(const nlohmann::json& j, TrackingMetrics& m) {
  try {
    TrackingMetrics out;
    out.fb_mean = j.at("fb_mean").get<double>();
    out.fb_std = j.at("fb_std").get<double>();
    out.fb_min = j.at("fb_min").get<double>();
    out.fb_max = j.at("fb_max").get<double>();
    out.retention = j.at("retention").get<double>();
    out.n_points_initial = j.value("n_points_initial", 0L);
    out.n_points_final = j.value("n_points_final", 0L);
    out.n_frames = j.value("n_frames", 0L);
    out.n_fb_samples = j.value("n_fb_samples", 0L);
    m = out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed metrics: ") + e.what());
  }
}

void MetricsAccumulator::add(const TrackReport& report) {
  if (report.frame_count() < 2) {
    throw Error(ErrorCode::EmptyReport, "report has no completed tracking step");
  }
  long initial = 0;
  long survivors = 0;
  for (const auto& t : report.tracks) {
    if (t.birth == 0) {
      ++initial;
      if (!t.lost_at) ++survivors;
    }
  }
  if (initial == 0) throw Error(ErrorCode::EmptyReport, "report has no frame-0 keypoints");
  for (const auto& t : report.tracks) {
    if (t.fb_errors.empty()) continue;
    if (pooling_ == FbPooling::per_step) {
      samples_.insert(samples_.end(), t.fb_errors.begin(), t.fb_errors.end());
    } else {
      double s = 0.0;
      for (double e : t.fb_errors) s += e;
      samples_.push_back(s / static_cast<double>(t.fb_errors.size()));
    }
  }
  initial_ += initial;
  final_ += survivors;
  frames_ += report.frame_count();
  ++reports_;
}

TrackingMetrics MetricsAccumulator::result() const {
  if (reports_ == 0) throw Error(ErrorCode::EmptyReport, "no reports to summarize");
  TrackingMetrics m;
  m.n_points_initial = initial_;
  m.n_points_final = final_;
  m.n_frames = frames_;
  m.n_fb_samples = static_cast<long>(samples_.size());
  m.retention = 100.0 * static_cast<double>(final_) / static_cast<double>(initial_);
  if (samples_.empty()) return m;
  double sum = 0.0;
  double lo = samples_.front();
  double hi = samples_.front();
  for (double v : samples_) {
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double n = static_cast<double>(samples_.size());
  m.fb_mean = sum / n;
  double ss = 0.0;
  for (double v : samples_) ss += (v - m.fb_mean) * (v - m.fb_mean);
  m.fb_std = std::sqrt(ss / n);
  m.fb_min = lo;
  m.fb_max = hi;
  return m;
}

TrackingMetrics compute_metrics(const TrackReport& report, FbPooling pooling) {
  MetricsAccumulator acc(pooling);
  acc.add(report);
  return acc.result();
}

TrackingMetrics compute_metrics(std::span<const TrackReport> reports, FbPooling pooling) {
  MetricsAccumulator acc(pooling);
  for (const auto& r : reports) acc.add(r);
  return acc.result();
}

// ---------------------------------------------------------------------------
// Accuracy

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double rank = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

std::vector<double> displacement_errors(const TrackReport& report, const GroundTruth& truth) {
  if (report.frame_count() != truth.frame_count()) {
    throw Error(ErrorCode::SequenceMismatch,
                "report has " + std::to_string(report.frame_count()) + " frames, truth has " +
                    std::to_string(truth.frame_count()));
  }
  std::vector<double> errors;
  const double ox = report.crop_offset.x;
  const double oy = report.crop_offset.y;
  for (const auto& t : report.tracks) {
    if (t.positions.size() < 2) continue;
    if (t.birth < 0 || t.birth + static_cast<int>(t.positions.size()) > truth.frame_count()) {
      throw Error(ErrorCode::SequenceMismatch, "track extends past the truth frames");
    }
    const DeformationField& born = truth.frames[t.birth];
    const Point2 p0 = t.positions.front();
    const Point2 mat = born.material_point({p0.x + ox, p0.y + oy});
    const Point2 u0 = born.displacement(mat.x, mat.y);
    for (std::size_t k = 1; k < t.positions.size(); ++k) {
      const Point2 u = truth.frames[t.birth + k].displacement(mat.x, mat.y);
      const double tx = t.positions[k].x - p0.x;
      const double ty = t.positions[k].y - p0.y;
      errors.push_back(std::hypot(tx - (u.x - u0.x), ty - (u.y - u0.y)));
    }
  }
  return errors;
}

void AccuracyAccumulator::add(const TrackReport& report, const GroundTruth& truth) {
  auto e = displacement_errors(report, truth);
  auto& bucket = errors_[std::string(to_string(truth.motion_label))];
  bucket.insert(bucket.end(), e.begin(), e.end());
}

AccuracyMetrics AccuracyAccumulator::result() const {
  AccuracyMetrics m;
  std::vector<double> all;
  for (const auto& [motion, errs] : errors_) {
    ErrorSummary s;
    s.median_abs_err = percentile(errs, 50.0);
    s.p95_abs_err = percentile(errs, 95.0);
    s.n_samples = static_cast<long>(errs.size());
    m.per_motion[motion] = s;
    all.insert(all.end(), errs.begin(), errs.end());
  }
  m.n_samples = static_cast<long>(all.size());
  m.median_abs_err = percentile(all, 50.0);
  m.p95_abs_err = percentile(std::move(all), 95.0);
  return m;
}

AccuracyMetrics compute_accuracy(const TrackReport& report, const GroundTruth& truth) {
  AccuracyAccumulator acc;
  acc.add(report, truth);
  return acc.result();
}

void to_json(nlohmann::json& j, const AccuracyMetrics& m) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [motion, s] : m.per_motion) {
    per[motion] = {{"median_abs_err", s.median_abs_err},
                   {"p95_abs_err", s.p95_abs_err},
                   {"n_samples", s.n_samples}};
  }
  j = nlohmann::json{{"median_abs_err", m.median_abs_err},
                     {"p95_abs_err", m.p95_abs_err},
                     {"n_samples", m.n_samples},
                     {"per_motion", std::move(per)}};
}

// ---------------------------------------------------------------------------
// Comparison

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::vector<std::string> row_cells(const ComparisonRow& r, int fb_dec, int ret_dec) {
  const auto& m = r.metrics;
  return {r.design,          fixed(m.fb_mean, fb_dec), fixed(m.fb_std, fb_dec),
          fixed(m.fb_min, fb_dec), fixed(m.fb_max, fb_dec), fixed(m.retention, ret_dec)};
}

}  // namespace

std::vector<std::string> ComparisonTable::ranking() const {
  std::vector<const ComparisonRow*> order;
  for (const auto& r : rows) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const ComparisonRow* a, const ComparisonRow* b) {
    return a->metrics.retention > b->metrics.retention;
  });
  std::vector<std::string> out;
  for (const auto* r : order) out.push_back(r->design);
  return out;
}

bool ComparisonTable::retention_strictly_ordered(const std::vector<std::string>& designs) const {
  if (rows.size() < 2) return true;
  double prev = 0.0;
  for (std::size_t i = 0; i < designs.size(); ++i) {
    const auto it = std::find_if(rows.begin(), rows.end(),
                                 [&](const ComparisonRow& r) { return r.design == designs[i]; });
    if (it == rows.end()) {
      throw Error(ErrorCode::InvalidArgument, "design '" + designs[i] + "' not in table");
    }
    if (i > 0 && !(it->metrics.retention < prev)) return false;
    prev = it->metrics.retention;
  }
  return true;
}

std::string ComparisonTable::to_csv(int fb_decimals, int retention_decimals) const {
  std::string out = kComparisonCsvHeader;
  out += '\n';
  for (const auto& r : rows) {
    const auto cells = row_cells(r, fb_decimals, retention_decimals);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  }
  return out;
}

std::string ComparisonTable::to_text(int fb_decimals, int retention_decimals) const {
  const std::vector<std::string> header{"Design", "Mean", "Std", "Min", "Max", "Retention"};
  std::vector<std::vector<std::string>> grid{header};
  for (const auto& r : rows) {
    auto cells = row_cells(r, fb_decimals, retention_decimals);
    cells.back() += "%";
    grid.push_back(std::move(cells));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : grid) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::ostringstream os;
  for (const auto& line : grid) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i == 0) {
        os << line[i] << std::string(width[i] - line[i].size(), ' ');
      } else {
        os << "  " << std::string(width[i] - line[i].size(), ' ') << line[i];
      }
    }
    os << '\n';
  }
  return os.str();
}

void to_json(nlohmann::json& j, const ComparisonTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"design", r.design},
                    {"mean", r.metrics.fb_mean},
                    {"std", r.metrics.fb_std},
                    {"min", r.metrics.fb_min},
                    {"max", r.metrics.fb_max},
                    {"retention", r.metrics.retention}});
  }
  j = nlohmann::json{{"columns", {"design", "mean", "std", "min", "max", "retention"}},
                     {"rows", std::move(rows)},
                     {"ranking_by_retention", t.ranking()}};
}

ComparisonTable compare_designs(const std::vector<ComparisonRow>& rows) {
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "compare_designs needs at least one design");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (rows[k].design == rows[i].design) {
        throw Error(ErrorCode::InvalidArgument, "duplicate design '" + rows[i].design + "'");
      }
    }
  }
  return ComparisonTable{rows};
}

}  // namespace magicskin
