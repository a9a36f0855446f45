#include "magicskin/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "magicskin/error.hpp"
#include "magicskin/gaussian.hpp"
#include "magicskin/image_io.hpp"
#include "magicskin/parallel.hpp"

namespace magicskin {

namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

constexpr std::string_view kSceneCtx = "scene";
constexpr std::string_view kMotionCtx = "motion";
constexpr std::string_view kPhotoCtx = "photo";
constexpr std::string_view kCorpusCtx = "corpus";

[[noreturn]] void config_fail(std::string_view ctx, const std::string& msg) {
  throw Error(ErrorCode::ConfigError, std::string(ctx) + ": " + msg);
}

double coverage_1d(int px, double a, double b) {
  return std::max(0.0, std::min(px + 1.0, b) - std::max(static_cast<double>(px), a));
}

// Adds `amount * coverage` of the box [x0,x1) x [y0,y1) to `plane`.
void add_box(GrayFrame& plane, double x0, double y0, double x1, double y1, double amount) {
  const int xa = std::max(0, static_cast<int>(std::floor(x0)));
  const int xb = std::min(plane.width() - 1, static_cast<int>(std::ceil(x1)) - 1);
  const int ya = std::max(0, static_cast<int>(std::floor(y0)));
  const int yb = std::min(plane.height() - 1, static_cast<int>(std::ceil(y1)) - 1);
  for (int y = ya; y <= yb; ++y) {
    const double cy = coverage_1d(y, y0, y1);
    for (int x = xa; x <= xb; ++x) {
      plane.at(x, y) += static_cast<float>(amount * cy * coverage_1d(x, x0, x1));
    }
  }
}

// Zero-mean, unit-std smooth noise.
std::vector<float> smooth_noise(int w, int h, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> white(static_cast<std::size_t>(w) * h);
  for (auto& v : white) v = static_cast<float>(normal(rng));
  std::vector<float> out(white.size());
  gaussian_blur(white, out, w, h, sigma);
  double mean = 0.0;
  for (float v : out) mean += v;
  mean /= static_cast<double>(out.size());
  double var = 0.0;
  for (float v : out) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(out.size()));
  for (auto& v : out) v = static_cast<float>((v - mean) / sd);
  return out;
}

// Bilinear sample with replicated borders.
float sample(const GrayFrame& g, double x, double y) {
  x = std::clamp(x, 0.0, g.width() - 1.0);
  y = std::clamp(y, 0.0, g.height() - 1.0);
  const int x0 = std::min(static_cast<int>(x), g.width() - 2 < 0 ? 0 : g.width() - 2);
  const int y0 = std::min(static_cast<int>(y), g.height() - 2 < 0 ? 0 : g.height() - 2);
  const int x1 = std::min(x0 + 1, g.width() - 1);
  const int y1 = std::min(y0 + 1, g.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = g.at(x0, y0) * (1.0 - fx) + g.at(x1, y0) * fx;
  const double bot = g.at(x0, y1) * (1.0 - fx) + g.at(x1, y1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

void check_unit(double v, std::string_view name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, std::string(name) + " must be in [0,1]");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Scene

void SceneConfig::validate() const {
  if (!(texture_mean > 0.0 && texture_mean <= 1.0)) config_fail(kSceneCtx, "texture_mean must be in (0,1]");
  if (!(texture_std >= 0.0)) config_fail(kSceneCtx, "texture_std must be >= 0");
  if (!(texture_sigma > 0.0)) config_fail(kSceneCtx, "texture_sigma must be > 0");
}

void to_json(nlohmann::json& j, const SceneConfig& c) {
  j = nlohmann::json{{"texture_mean", c.texture_mean},
                     {"texture_std", c.texture_std},
                     {"texture_sigma", c.texture_sigma}};
}

void from_json(const nlohmann::json& j, SceneConfig& c) {
  detail::check_keys(j, {"texture_mean", "texture_std", "texture_sigma"}, kSceneCtx);
  SceneConfig out;
  detail::read_optional(j, "texture_mean", out.texture_mean, kSceneCtx);
  detail::read_optional(j, "texture_std", out.texture_std, kSceneCtx);
  detail::read_optional(j, "texture_sigma", out.texture_sigma, kSceneCtx);
  out.validate();
  c = out;
}

Point2 grid_origin(const MarkerPattern& p) {
  return {(kSensorWidth - p.extent_x_px()) / 2.0, (kSensorHeight - p.extent_y_px()) / 2.0};
}

std::vector<Point2> cell_centers(const MarkerPattern& p) {
  const Point2 o = grid_origin(p);
  std::vector<Point2> out;
  out.reserve(static_cast<std::size_t>(p.expected_cells()));
  for (int r = 0; r < p.rows; ++r) {
    for (int c = 0; c < p.cols; ++c) {
      out.push_back({o.x + c * p.pitch_px() + p.square_px() / 2.0,
                     o.y + r * p.pitch_px() + p.square_px() / 2.0});
    }
  }
  return out;
}

GrayFrame render_pattern_layer(const MarkerPattern& p) {
  p.validate();
  GrayFrame t(kSensorWidth, kSensorHeight, 0.0f);
  const Point2 o = grid_origin(p);
  const double pitch = p.pitch_px();
  const double sq = p.square_px();
  const double absorb = 1.0 - p.tint_transmittance;
  if (p.design != MarkerDesign::clear) {
    const double square_sign = p.design == MarkerDesign::grey_lines ? -1.0 : 1.0;
    if (p.design == MarkerDesign::grey_lines) {
      const double border = p.spacing_mm * p.px_per_mm;
      add_box(t, o.x - border, o.y - border, o.x + p.extent_x_px() + border,
              o.y + p.extent_y_px() + border, absorb);
    }
    for (int r = 0; r < p.rows; ++r) {
      for (int c = 0; c < p.cols; ++c) {
        const double x0 = o.x + c * pitch;
        const double y0 = o.y + r * pitch;
        add_box(t, x0, y0, x0 + sq, y0 + sq, square_sign * absorb);
      }
    }
  }
  for (auto& v : t.data()) v = std::clamp(1.0f - v, 0.0f, 1.0f);
  return t;
}

Scene render_scene(const MarkerPattern& pattern, std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  Scene s;
  s.pattern = pattern;
  s.seed = seed;
  s.transmittance = render_pattern_layer(pattern);
  const auto z = smooth_noise(kSensorWidth, kSensorHeight, cfg.texture_sigma, derive_seed(seed, 1));
  std::vector<float> tex(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    tex[i] = static_cast<float>(std::clamp(cfg.texture_mean + cfg.texture_std * z[i], 0.02, 1.0));
  }
  s.base_texture = GrayFrame(kSensorWidth, kSensorHeight, std::move(tex));
  return s;
}

Scene apply_wear(const Scene& scene, double wear_level) {
  check_unit(wear_level, "wear_level");
  Scene out = scene;
  out.wear_level = std::max(scene.wear_level, wear_level);
  if (wear_level == 0.0) return out;
  const int w = scene.transmittance.width();
  const int h = scene.transmittance.height();
  const auto z = smooth_noise(w, h, 24.0, derive_seed(scene.seed, 2));
  auto t = out.transmittance.data();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double rho = std::clamp(wear_level * (1.0 + 0.5 * z[i]), 0.0, 1.0);
    t[i] = static_cast<float>(t[i] + (1.0 - t[i]) * rho);
  }
  out.transmittance = gaussian_blur(out.transmittance, 2.0 * wear_level);
  return out;
}

double pattern_contrast(const Scene& scene) {
  const MarkerPattern& p = scene.pattern;
  if (p.design == MarkerDesign::clear) return 0.0;
  const GrayFrame nominal = render_pattern_layer(p);
  const Point2 o = grid_origin(p);
  const double border = p.design == MarkerDesign::grey_lines ? p.spacing_mm * p.px_per_mm : 0.0;
  const double x0 = o.x - border;
  const double y0 = o.y - border;
  const double x1 = o.x + p.extent_x_px() + border;
  const double y1 = o.y + p.extent_y_px() + border;
  const auto tint = static_cast<float>(p.tint_transmittance);
  double clear_sum = 0.0;
  double tint_sum = 0.0;
  std::size_t clear_n = 0;
  std::size_t tint_n = 0;
  for (int y = static_cast<int>(std::ceil(y0)); y + 1 <= y1; ++y) {
    for (int x = static_cast<int>(std::ceil(x0)); x + 1 <= x1; ++x) {
      const float v = nominal.at(x, y);
      if (v == 1.0f) {
        clear_sum += scene.transmittance.at(x, y);
        ++clear_n;
      } else if (std::abs(v - tint) < 1e-6f) {
        tint_sum += scene.transmittance.at(x, y);
        ++tint_n;
      }
    }
  }
  if (clear_n == 0 || tint_n == 0) return 0.0;
  return clear_sum / static_cast<double>(clear_n) - tint_sum / static_cast<double>(tint_n);
}

// ---------------------------------------------------------------------------
// Deformation

double Jacobian2::norm() const noexcept {
  const double f2 = xx * xx + xy * xy + yx * yx + yy * yy;
  const double det = xx * yy - xy * yx;
  const double disc = std::sqrt(std::max(0.0, f2 * f2 - 4.0 * det * det));
  return std::sqrt(0.5 * (f2 + disc));
}

namespace {

bool has_indent(const DeformationField& f) { return f.depth_mm > 0.0 && f.alpha_px_per_mm > 0.0; }
bool has_shear(const DeformationField& f) { return f.shift.x != 0.0 || f.shift.y != 0.0; }

double shear_weight(const DeformationField& f, double r) {
  if (r <= f.radius_px) return 1.0;
  if (r >= f.radius_px + f.falloff_px) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (r - f.radius_px) / f.falloff_px));
}

}  // namespace

Point2 DeformationField::displacement(double x, double y) const noexcept {
  Point2 u = uniform;
  const double dx = x - center.x;
  const double dy = y - center.y;
  const double r2 = dx * dx + dy * dy;
  if (has_indent(*this) && r2 < 9.0 * radius_px * radius_px) {
    const double g = alpha_px_per_mm * depth_mm / radius_px *
                     std::exp(1.0 - r2 / (radius_px * radius_px));
    u.x += g * dx;
    u.y += g * dy;
  }
  if (has_shear(*this)) {
    const double w = shear_weight(*this, std::sqrt(r2));
    u.x += shift.x * w;
    u.y += shift.y * w;
  }
  return u;
}

Jacobian2 DeformationField::jacobian(double x, double y) const noexcept {
  Jacobian2 j;
  const double dx = x - center.x;
  const double dy = y - center.y;
  const double r2 = dx * dx + dy * dy;
  const double rr = radius_px * radius_px;
  if (has_indent(*this) && r2 < 9.0 * rr) {
    const double g = alpha_px_per_mm * depth_mm / radius_px * std::exp(1.0 - r2 / rr);
    j.xx += g * (1.0 - 2.0 * dx * dx / rr);
    j.xy += g * (-2.0 * dx * dy / rr);
    j.yx += g * (-2.0 * dx * dy / rr);
    j.yy += g * (1.0 - 2.0 * dy * dy / rr);
  }
  if (has_shear(*this)) {
    const double r = std::sqrt(r2);
    if (r > radius_px && r < radius_px + falloff_px) {
      const double dw = -0.5 * std::numbers::pi / falloff_px *
                        std::sin(std::numbers::pi * (r - radius_px) / falloff_px);
      const double gx = dw * dx / r;
      const double gy = dw * dy / r;
      j.xx += shift.x * gx;
      j.xy += shift.x * gy;
      j.yx += shift.y * gx;
      j.yy += shift.y * gy;
    }
  }
  return j;
}

bool DeformationField::in_contact(double x, double y) const noexcept {
  return depth_mm > 0.0 && std::hypot(x - center.x, y - center.y) <= radius_px;
}

double DeformationField::support_radius() const noexcept {
  double r = 0.0;
  if (has_indent(*this)) r = 3.0 * radius_px;
  if (has_shear(*this)) r = std::max(r, radius_px + falloff_px);
  return r;
}

double DeformationField::max_local_displacement() const noexcept {
  double m = 0.0;
  if (has_indent(*this)) m += alpha_px_per_mm * depth_mm * std::sqrt(0.5) * std::exp(0.5);
  if (has_shear(*this)) m += std::hypot(shift.x, shift.y);
  return m;
}

double DeformationField::compute_max_strain() const {
  const double s = support_radius();
  if (s <= 0.0) return 0.0;
  double best = jacobian(center.x, center.y).norm();
  const int x0 = std::max(0, static_cast<int>(std::floor(center.x - s)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(center.x + s)));
  const int y0 = std::max(0, static_cast<int>(std::floor(center.y - s)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(center.y + s)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) best = std::max(best, jacobian(x, y).norm());
  }
  return best;
}

namespace {

// Newton iteration for X + u(X) = p from the starting point x.
Point2 solve_material(const DeformationField& f, Point2 p, Point2 x) noexcept {
  for (int it = 0; it < 12; ++it) {
    const Point2 u = f.displacement(x.x, x.y);
    const double fx = x.x + u.x - p.x;
    const double fy = x.y + u.y - p.y;
    if (fx * fx + fy * fy < 1e-24) break;
    const Jacobian2 j = f.jacobian(x.x, x.y);
    const double a = 1.0 + j.xx;
    const double b = j.xy;
    const double c = j.yx;
    const double d = 1.0 + j.yy;
    const double det = a * d - b * c;
    if (std::abs(det) < 1e-12) {
      x.x -= fx;
      x.y -= fy;
      continue;
    }
    x.x -= (d * fx - b * fy) / det;
    x.y -= (a * fy - c * fx) / det;
  }
  return x;
}

}  // namespace

Point2 DeformationField::material_point(Point2 p) const noexcept {
  const Point2 x{p.x - uniform.x, p.y - uniform.y};
  if (support_radius() <= 0.0) return x;
  return solve_material(*this, p, x);
}

DenseField rasterize(const DeformationField& f) {
  DenseField d;
  d.width = f.width;
  d.height = f.height;
  const std::size_t n = static_cast<std::size_t>(f.width) * f.height;
  d.dx.resize(n);
  d.dy.resize(n);
  d.contact.resize(n);
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * f.width + x;
      const Point2 u = f.displacement(x, y);
      d.dx[i] = static_cast<float>(u.x);
      d.dy[i] = static_cast<float>(u.y);
      d.contact[i] = f.in_contact(x, y) ? 1 : 0;
    }
  }
  return d;
}

DeformationField indentation_field(Point2 center, double depth_mm, double radius_px,
                                   double strain_per_mm) {
  if (!(depth_mm >= 0.0)) throw Error(ErrorCode::InvalidArgument, "indentation depth must be >= 0");
  if (!(radius_px > 0.0)) throw Error(ErrorCode::InvalidArgument, "indentation radius must be > 0");
  if (!(strain_per_mm >= 0.0)) throw Error(ErrorCode::InvalidArgument, "strain_per_mm must be >= 0");
  DeformationField f;
  f.center = center;
  f.depth_mm = depth_mm;
  f.radius_px = radius_px;
  f.alpha_px_per_mm = strain_per_mm * radius_px / std::numbers::e;
  f.max_strain = f.compute_max_strain();
  return f;
}

DeformationField shear_field(const DeformationField& contact, Point2 shift, double falloff_px) {
  if (!(falloff_px > 0.0)) throw Error(ErrorCode::InvalidArgument, "shear falloff must be > 0");
  DeformationField f = contact;
  f.shift = {contact.shift.x + shift.x, contact.shift.y + shift.y};
  f.falloff_px = falloff_px;
  f.max_strain = f.compute_max_strain();
  return f;
}

DeformationField translation_field(Point2 shift) {
  DeformationField f;
  f.uniform = shift;
  return f;
}

// ---------------------------------------------------------------------------
// Motion scripts

std::string_view to_string(MotionLabel m) noexcept {
  switch (m) {
    case MotionLabel::horizontal: return "horizontal";
    case MotionLabel::vertical: return "vertical";
    case MotionLabel::diagonal: return "diagonal";
    case MotionLabel::normal_load: return "normal_load";
    case MotionLabel::circular: return "circular";
  }
  return "unknown";
}

const std::array<MotionLabel, 5>& all_motions() noexcept {
  static constexpr std::array<MotionLabel, 5> kAll{MotionLabel::horizontal, MotionLabel::vertical,
                                                   MotionLabel::diagonal, MotionLabel::normal_load,
                                                   MotionLabel::circular};
  return kAll;
}

MotionLabel parse_motion(std::string_view name) {
  for (auto m : all_motions()) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorCode::ConfigError, "unknown motion '" + std::string(name) + "'");
}

void MotionConfig::validate() const {
  if (!(depth_mm >= 0.0)) config_fail(kMotionCtx, "depth_mm must be >= 0");
  if (!(radius_px > 0.0)) config_fail(kMotionCtx, "radius_px must be > 0");
  if (!(strain_per_mm >= 0.0)) config_fail(kMotionCtx, "strain_per_mm must be >= 0");
  if (!(shear_px >= 0.0)) config_fail(kMotionCtx, "shear_px must be >= 0");
  if (!(falloff_px > 0.0)) config_fail(kMotionCtx, "falloff_px must be > 0");
  if (!(cell_spacing_x >= 0.0) || !(cell_spacing_y >= 0.0)) config_fail(kMotionCtx, "cell spacing must be >= 0");
}

void to_json(nlohmann::json& j, const MotionConfig& c) {
  j = nlohmann::json{{"depth_mm", c.depth_mm},         {"radius_px", c.radius_px},
                     {"strain_per_mm", c.strain_per_mm}, {"shear_px", c.shear_px},
                     {"falloff_px", c.falloff_px},     {"cell_spacing_x", c.cell_spacing_x},
                     {"cell_spacing_y", c.cell_spacing_y}};
}

void from_json(const nlohmann::json& j, MotionConfig& c) {
  detail::check_keys(j,
                     {"depth_mm", "radius_px", "strain_per_mm", "shear_px", "falloff_px",
                      "cell_spacing_x", "cell_spacing_y"},
                     kMotionCtx);
  MotionConfig out;
  detail::read_optional(j, "depth_mm", out.depth_mm, kMotionCtx);
  detail::read_optional(j, "radius_px", out.radius_px, kMotionCtx);
  detail::read_optional(j, "strain_per_mm", out.strain_per_mm, kMotionCtx);
  detail::read_optional(j, "shear_px", out.shear_px, kMotionCtx);
  detail::read_optional(j, "falloff_px", out.falloff_px, kMotionCtx);
  detail::read_optional(j, "cell_spacing_x", out.cell_spacing_x, kMotionCtx);
  detail::read_optional(j, "cell_spacing_y", out.cell_spacing_y, kMotionCtx);
  out.validate();
  c = out;
}

Point2 cell_center(GridCell cell, const MotionConfig& cfg) {
  return {kSensorWidth / 2.0 + (cell.col - 1) * cfg.cell_spacing_x,
          kSensorHeight / 2.0 + (cell.row - 1) * cfg.cell_spacing_y};
}

std::vector<DeformationField> script_motion(MotionLabel motion, GridCell cell, int frames,
                                            const MotionConfig& cfg) {
  if (frames < 2) throw Error(ErrorCode::InvalidArgument, "script_motion needs at least 2 frames");
  cfg.validate();
  const Point2 c = cell_center(cell, cfg);
  const int last = frames - 1;
  const int ramp = std::max(1, static_cast<int>(std::lround(last / 4.0)));
  const int span = last - 2 * ramp;
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<DeformationField> out;
  out.reserve(static_cast<std::size_t>(frames));
  for (int k = 0; k < frames; ++k) {
    double depth = cfg.depth_mm;
    if (k <= ramp) {
      depth = cfg.depth_mm * k / ramp;
    } else if (k >= last - ramp) {
      depth = cfg.depth_mm * (last - k) / ramp;
    }
    const double t = (span > 0 && k > ramp && k < last - ramp)
                         ? static_cast<double>(k - ramp) / span
                         : 0.0;
    Point2 shift;
    const double swing = cfg.shear_px * std::sin(two_pi * t);
    switch (motion) {
      case MotionLabel::horizontal: shift = {swing, 0.0}; break;
      case MotionLabel::vertical: shift = {0.0, swing}; break;
      case MotionLabel::diagonal: shift = {swing * std::sqrt(0.5), swing * std::sqrt(0.5)}; break;
      case MotionLabel::normal_load: break;
      case MotionLabel::circular: {
        double rho = cfg.shear_px;
        double theta = 0.0;
        if (t < 0.2) {
          rho = cfg.shear_px * t / 0.2;
        } else if (t <= 0.8) {
          theta = two_pi * (t - 0.2) / 0.6;
        } else {
          rho = cfg.shear_px * (1.0 - t) / 0.2;
        }
        shift = {rho * std::cos(theta), rho * std::sin(theta)};
        break;
      }
    }
    DeformationField f = indentation_field(c, depth, cfg.radius_px, cfg.strain_per_mm);
    if (shift.x != 0.0 || shift.y != 0.0) f = shear_field(f, shift, cfg.falloff_px);
    out.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

void PhotometricConfig::validate() const {
  if (!(noise_sigma >= 0.0)) config_fail(kPhotoCtx, "noise_sigma must be >= 0");
  for (double b : backlight) {
    if (!(b >= 0.0 && b <= 1.0)) config_fail(kPhotoCtx, "backlight components must be in [0,1]");
  }
  if (!(exposure > 0.0)) config_fail(kPhotoCtx, "exposure must be > 0");
  if (!(vignette >= 0.0 && vignette < 1.0)) config_fail(kPhotoCtx, "vignette must be in [0,1)");
  if (!(contact_contrast >= 0.0 && contact_contrast <= 1.0)) config_fail(kPhotoCtx, "contact_contrast must be in [0,1]");
  if (!(contact_darkening >= 0.0 && contact_darkening <= 1.0)) config_fail(kPhotoCtx, "contact_darkening must be in [0,1]");
  if (!(pressure_gain > 0.0)) config_fail(kPhotoCtx, "pressure_gain must be > 0");
  if (!(pressure_ref_depth_mm > 0.0)) config_fail(kPhotoCtx, "pressure_ref_depth_mm must be > 0");
  if (!(local_mean_sigma > 0.0)) config_fail(kPhotoCtx, "local_mean_sigma must be > 0");
}

void to_json(nlohmann::json& j, const PhotometricConfig& c) {
  j = nlohmann::json{{"noise_sigma", c.noise_sigma},
                     {"backlight", c.backlight},
                     {"exposure", c.exposure},
                     {"vignette", c.vignette},
                     {"contact_contrast", c.contact_contrast},
                     {"contact_darkening", c.contact_darkening},
                     {"pressure_gain", c.pressure_gain},
                     {"pressure_ref_depth_mm", c.pressure_ref_depth_mm},
                     {"local_mean_sigma", c.local_mean_sigma}};
}

void from_json(const nlohmann::json& j, PhotometricConfig& c) {
  detail::check_keys(j,
                     {"noise_sigma", "backlight", "exposure", "vignette", "contact_contrast",
                      "contact_darkening", "pressure_gain", "pressure_ref_depth_mm",
                      "local_mean_sigma"},
                     kPhotoCtx);
  PhotometricConfig out;
  detail::read_optional(j, "noise_sigma", out.noise_sigma, kPhotoCtx);
  detail::read_optional(j, "backlight", out.backlight, kPhotoCtx);
  detail::read_optional(j, "exposure", out.exposure, kPhotoCtx);
  detail::read_optional(j, "vignette", out.vignette, kPhotoCtx);
  detail::read_optional(j, "contact_contrast", out.contact_contrast, kPhotoCtx);
  detail::read_optional(j, "contact_darkening", out.contact_darkening, kPhotoCtx);
  detail::read_optional(j, "pressure_gain", out.pressure_gain, kPhotoCtx);
  detail::read_optional(j, "pressure_ref_depth_mm", out.pressure_ref_depth_mm, kPhotoCtx);
  detail::read_optional(j, "local_mean_sigma", out.local_mean_sigma, kPhotoCtx);
  out.validate();
  c = out;
}

double pressure_proxy(const DeformationField& field, const PhotometricConfig& photo, double x,
                      double y) noexcept {
  if (field.depth_mm <= 0.0) return 0.0;
  const double dx = x - field.center.x;
  const double dy = y - field.center.y;
  const double s2 = (dx * dx + dy * dy) / (field.radius_px * field.radius_px);
  if (s2 >= 1.0) return 0.0;
  const double load = field.depth_mm / photo.pressure_ref_depth_mm;
  return std::min(1.0, photo.pressure_gain * load * std::sqrt(1.0 - s2));
}

namespace {

struct SceneRasters {
  GrayFrame value;       // texture * transmittance
  GrayFrame local_mean;  // empty until a contact needs it
};

SceneRasters scene_rasters(const Scene& scene) {
  if (scene.base_texture.width() != scene.transmittance.width() ||
      scene.base_texture.height() != scene.transmittance.height()) {
    throw Error(ErrorCode::DimensionMismatch, "scene rasters differ in size");
  }
  SceneRasters r;
  r.value = scene.base_texture;
  auto v = r.value.data();
  const auto t = scene.transmittance.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= t[i];
  return r;
}

GrayFrame appearance(SceneRasters& rasters, const DeformationField& field,
                     const PhotometricConfig& photo) {
  const GrayFrame& value = rasters.value;
  const int w = value.width();
  const int h = value.height();
  if (field.width != w || field.height != h) {
    throw Error(ErrorCode::DimensionMismatch, "field and scene dimensions differ");
  }
  const bool contact = field.depth_mm > 0.0 && photo.contact_contrast + photo.contact_darkening > 0.0;
  if (contact && rasters.local_mean.empty()) {
    rasters.local_mean = gaussian_blur(value, photo.local_mean_sigma);
  }
  GrayFrame out(w, h, 0.0f);
  const double reach = field.support_radius() + field.max_local_displacement() + 2.0;
  const double cx = field.center.x + field.uniform.x;
  const double cy = field.center.y + field.uniform.y;
  for (int y = 0; y < h; ++y) {
    float* dst = out.row(y);
    bool warm = false;
    Point2 prev;
    for (int x = 0; x < w; ++x) {
      const Point2 p{static_cast<double>(x), static_cast<double>(y)};
      const double rx = p.x - cx;
      const double ry = p.y - cy;
      const bool local = reach > 2.0 && rx * rx + ry * ry < reach * reach;
      Point2 m{p.x - field.uniform.x, p.y - field.uniform.y};
      if (local) {
        m = solve_material(field, p, warm ? Point2{prev.x + 1.0, prev.y} : m);
        prev = m;
      }
      warm = local;
      float v = sample(value, m.x, m.y);
      if (contact && local) {
        const double pr = pressure_proxy(field, photo, m.x, m.y);
        if (pr > 0.0) {
          const double mean = sample(rasters.local_mean, m.x, m.y);
          v = static_cast<float>(mean + (v - mean) * (1.0 - photo.contact_contrast * pr) -
                                 photo.contact_darkening * pr);
        }
      }
      dst[x] = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return out;
}

Frame illuminate(const GrayFrame& a, const PhotometricConfig& photo, std::uint64_t noise_seed) {
  const int w = a.width();
  const int h = a.height();
  Frame f(w, h);
  auto data = f.data();
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> normal(0.0, photo.noise_sigma);
  const bool noisy = photo.noise_sigma > 0.0;
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  const double rmax2 = cx * cx + cy * cy;
  for (int y = 0; y < h; ++y) {
    const float* src = a.row(y);
    for (int x = 0; x < w; ++x) {
      const double r2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / rmax2;
      const double lum = photo.exposure * (1.0 - photo.vignette * r2) * src[x];
      for (int c = 0; c < 3; ++c) {
        double v = photo.backlight[c] * lum;
        if (noisy) v += normal(rng);
        data[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
      }
    }
  }
  return f;
}

}  // namespace

GrayFrame render_appearance(const Scene& scene, const DeformationField& field,
                            const PhotometricConfig& photo) {
  photo.validate();
  SceneRasters r = scene_rasters(scene);
  return appearance(r, field, photo);
}

Frame render_frame(const Scene& scene, const DeformationField& field,
                   const PhotometricConfig& photo, std::uint64_t noise_seed) {
  return illuminate(render_appearance(scene, field, photo), photo, noise_seed);
}

// ---------------------------------------------------------------------------
// Ground truth

namespace {

nlohmann::json field_json(const DeformationField& f) {
  return {{"width", f.width},
          {"height", f.height},
          {"center", {f.center.x, f.center.y}},
          {"depth_mm", f.depth_mm},
          {"radius_px", f.radius_px},
          {"alpha_px_per_mm", f.alpha_px_per_mm},
          {"shift", {f.shift.x, f.shift.y}},
          {"falloff_px", f.falloff_px},
          {"uniform", {f.uniform.x, f.uniform.y}}};
}

DeformationField field_from_json(const nlohmann::json& j) {
  DeformationField f;
  f.width = j.at("width").get<int>();
  f.height = j.at("height").get<int>();
  f.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()};
  f.depth_mm = j.at("depth_mm").get<double>();
  f.radius_px = j.at("radius_px").get<double>();
  f.alpha_px_per_mm = j.at("alpha_px_per_mm").get<double>();
  f.shift = {j.at("shift").at(0).get<double>(), j.at("shift").at(1).get<double>()};
  f.falloff_px = j.at("falloff_px").get<double>();
  f.uniform = {j.at("uniform").at(0).get<double>(), j.at("uniform").at(1).get<double>()};
  return f;
}

}  // namespace

void to_json(nlohmann::json& j, const GroundTruth& t) {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t k = 0; k < t.frames.size(); ++k) {
    const DeformationField& f = t.frames[k];
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& p : t.sample_points) {
      const Point2 u = f.displacement(p.x, p.y);
      samples.push_back({{"x", p.x}, {"y", p.y}, {"dx", u.x}, {"dy", u.y}});
    }
    const Point2 uc = f.displacement(f.center.x, f.center.y);
    frames.push_back({{"index", k},
                      {"samples", std::move(samples)},
                      {"max_strain", f.max_strain},
                      {"contact",
                       {{"cx", f.center.x + uc.x},
                        {"cy", f.center.y + uc.y},
                        {"r", f.depth_mm > 0.0 ? f.radius_px : 0.0}}},
                      {"field", field_json(f)}});
  }
  j = nlohmann::json{{"motion_label", std::string(to_string(t.motion_label))},
                     {"variant", t.variant},
                     {"cell", {t.cell.col, t.cell.row}},
                     {"frames", std::move(frames)}};
}

void from_json(const nlohmann::json& j, GroundTruth& t) {
  try {
    GroundTruth out;
    out.motion_label = parse_motion(j.at("motion_label").get<std::string>());
    out.variant = j.at("variant").get<std::string>();
    out.cell = {j.at("cell").at(0).get<int>(), j.at("cell").at(1).get<int>()};
    const auto& frames = j.at("frames");
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const auto& fj = frames[k];
      if (fj.at("index").get<std::size_t>() != k) {
        throw Error(ErrorCode::ConfigError, "truth frames out of order");
      }
      DeformationField f = field_from_json(fj.at("field"));
      f.max_strain = fj.at("max_strain").get<double>();
      out.frames.push_back(f);
      if (k == 0) {
        for (const auto& s : fj.at("samples")) {
          out.sample_points.push_back({s.at("x").get<double>(), s.at("y").get<double>()});
        }
      }
    }
    t = std::move(out);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed truth: ") + e.what());
  }
}

GroundTruth load_truth(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in).get<GroundTruth>();
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Corpus

void CorpusConfig::validate() const {
  if (variants.empty()) config_fail(kCorpusCtx, "at least one variant is required");
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& v = variants[i];
    if (v.name.empty()) config_fail(kCorpusCtx, "variant names must be non-empty");
    if (!(v.wear >= 0.0 && v.wear <= 1.0)) config_fail(kCorpusCtx, "variant wear must be in [0,1]");
    for (std::size_t k = 0; k < i; ++k) {
      if (variants[k].name == v.name) config_fail(kCorpusCtx, "duplicate variant '" + v.name + "'");
    }
  }
  if (motions.empty()) config_fail(kCorpusCtx, "at least one motion is required");
  if (cells.empty()) config_fail(kCorpusCtx, "at least one cell is required");
  for (const auto& c : cells) {
    if (c.col < 0 || c.col > 2 || c.row < 0 || c.row > 2) config_fail(kCorpusCtx, "cells must lie in the 3x3 grid");
  }
  if (frames < 2) config_fail(kCorpusCtx, "frames must be >= 2");
  if (image_format != "png" && image_format != "ppm") config_fail(kCorpusCtx, "image_format must be png or ppm");
  scene.validate();
  motion.validate();
  photo.validate();
}

void to_json(nlohmann::json& j, const CorpusConfig& c) {
  nlohmann::json variants = nlohmann::json::array();
  for (const auto& v : c.variants) {
    variants.push_back({{"name", v.name}, {"design", std::string(to_string(v.design))}, {"wear", v.wear}});
  }
  nlohmann::json motions = nlohmann::json::array();
  for (auto m : c.motions) motions.push_back(std::string(to_string(m)));
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : c.cells) cells.push_back({cell.col, cell.row});
  j = nlohmann::json{{"variants", std::move(variants)},
                     {"motions", std::move(motions)},
                     {"cells", std::move(cells)},
                     {"frames", c.frames},
                     {"seed", c.seed},
                     {"image_format", c.image_format},
                     {"scene", c.scene},
                     {"motion", c.motion},
                     {"photo", c.photo}};
}

void from_json(const nlohmann::json& j, CorpusConfig& c) {
  detail::check_keys(j,
                     {"variants", "motions", "cells", "frames", "seed", "image_format", "scene",
                      "motion", "photo"},
                     kCorpusCtx);
  CorpusConfig out;
  try {
    if (auto it = j.find("variants"); it != j.end()) {
      out.variants.clear();
      for (const auto& v : *it) {
        detail::check_keys(v, {"name", "design", "wear"}, "corpus.variants");
        CorpusVariant cv;
        cv.design = parse_design(v.at("design").get<std::string>());
        cv.name = v.value("name", std::string(to_string(cv.design)));
        cv.wear = v.value("wear", 0.0);
        out.variants.push_back(cv);
      }
    }
    if (auto it = j.find("motions"); it != j.end()) {
      out.motions.clear();
      for (const auto& m : *it) out.motions.push_back(parse_motion(m.get<std::string>()));
    }
    if (auto it = j.find("cells"); it != j.end()) {
      out.cells.clear();
      for (const auto& cell : *it) {
        out.cells.push_back({cell.at(0).get<int>(), cell.at(1).get<int>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    config_fail(kCorpusCtx, e.what());
  }
  detail::read_optional(j, "frames", out.frames, kCorpusCtx);
  detail::read_optional(j, "seed", out.seed, kCorpusCtx);
  detail::read_optional(j, "image_format", out.image_format, kCorpusCtx);
  detail::read_optional(j, "scene", out.scene, kCorpusCtx);
  detail::read_optional(j, "motion", out.motion, kCorpusCtx);
  detail::read_optional(j, "photo", out.photo, kCorpusCtx);
  out.validate();
  c = std::move(out);
}

std::vector<SequenceSpec> plan_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  std::vector<SequenceSpec> out;
  for (const auto& v : cfg.variants) {
    for (auto m : cfg.motions) {
      for (const auto& cell : cfg.cells) {
        SequenceSpec s;
        s.variant = v;
        s.motion = m;
        s.cell = cell;
        s.id = v.name + "_" + std::string(to_string(m)) + "_c" + std::to_string(cell.col) +
               std::to_string(cell.row);
        const std::uint64_t key = (static_cast<std::uint64_t>(m) << 8) |
                                  (static_cast<std::uint64_t>(cell.row) << 4) |
                                  static_cast<std::uint64_t>(cell.col);
        s.scene_seed = derive_seed(cfg.seed, 2 * key);
        s.noise_seed = derive_seed(cfg.seed, 2 * key + 1);
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

MarkerPattern variant_pattern(const CorpusVariant& variant) {
  return MarkerPattern::make(variant.design);
}

GeneratedSequence render_sequence(const CorpusConfig& cfg, const SequenceSpec& spec) {
  GeneratedSequence g;
  g.spec = spec;
  Scene scene = render_scene(variant_pattern(spec.variant), spec.scene_seed, cfg.scene);
  if (spec.variant.wear > 0.0) scene = apply_wear(scene, spec.variant.wear);
  const auto fields = script_motion(spec.motion, spec.cell, cfg.frames, cfg.motion);
  SceneRasters rasters = scene_rasters(scene);
  g.sequence.fps = 40.0;
  g.sequence.frames.reserve(fields.size());
  for (std::size_t k = 0; k < fields.size(); ++k) {
    const GrayFrame a = appearance(rasters, fields[k], cfg.photo);
    Frame f = illuminate(a, cfg.photo, derive_seed(spec.noise_seed, k));
    f.set_index(static_cast<int>(k));
    g.sequence.frames.push_back(std::move(f));
  }
  g.truth.motion_label = spec.motion;
  g.truth.variant = spec.variant.name;
  g.truth.cell = spec.cell;
  g.truth.frames = fields;
  g.truth.sample_points.push_back(cell_center(spec.cell, cfg.motion));
  for (const auto& p : cell_centers(scene.pattern)) g.truth.sample_points.push_back(p);
  return g;
}

namespace {

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << j.dump(1) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

nlohmann::json sequence_meta(const SequenceSpec& s, int frames) {
  return {{"id", s.id},
          {"variant", s.variant.name},
          {"design", std::string(to_string(s.variant.design))},
          {"wear", s.variant.wear},
          {"motion", std::string(to_string(s.motion))},
          {"cell", {s.cell.col, s.cell.row}},
          {"frames", frames},
          {"pattern", variant_pattern(s.variant)}};
}

}  // namespace

void generate_corpus(const CorpusConfig& cfg, const fs::path& out_dir, int jobs) {
  const auto specs = plan_corpus(cfg);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  parallel_for(specs.size(), jobs, [&](std::size_t i) {
    const auto& spec = specs[i];
    const GeneratedSequence g = render_sequence(cfg, spec);
    const fs::path dir = out_dir / spec.id;
    std::error_code e;
    fs::remove_all(dir, e);
    fs::create_directories(dir, e);
    if (e) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + e.message());
    save_sequence(g.sequence, dir, cfg.image_format);
    write_json(g.truth, dir / "truth.json");
    write_json(sequence_meta(spec, cfg.frames), dir / "meta.json");
  });
  nlohmann::json index = nlohmann::json::array();
  for (const auto& s : specs) index.push_back(sequence_meta(s, cfg.frames));
  write_json({{"config", cfg}, {"sequences", std::move(index)}}, out_dir / "corpus.json");
}

}  // namespace magicskin
