#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "magicskin/pattern.hpp"
#include "magicskin/raster.hpp"

namespace magicskin {

/// Mixes a seed with a stream tag (splitmix64 finalizer).
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

struct SceneConfig {
  double texture_mean = 0.80;
  double texture_std = 0.03;
  double texture_sigma = 1.5;  // px, correlation length of the surface detail

  void validate() const;
  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

void to_json(nlohmann::json& j, const SceneConfig& cfg);
void from_json(const nlohmann::json& j, SceneConfig& cfg);

/// Skin in its rest state, in sensor pixels.
struct Scene {
  MarkerPattern pattern;
  std::uint64_t seed = 0;
  double wear_level = 0.0;
  GrayFrame base_texture;   // surface detail seen through the skin
  GrayFrame transmittance;  // marker layer, 1 = clear
};

/// Transmittance of the marker layer with exact pixel-area coverage at the
/// edges. The grid is centred in a kSensorWidth x kSensorHeight raster.
[[nodiscard]] GrayFrame render_pattern_layer(const MarkerPattern& pattern);

/// Top-left corner of the marker grid in sensor pixels.
[[nodiscard]] Point2 grid_origin(const MarkerPattern& pattern);

/// Centres of all grid cells in sensor pixels, row-major.
[[nodiscard]] std::vector<Point2> cell_centers(const MarkerPattern& pattern);

[[nodiscard]] Scene render_scene(const MarkerPattern& pattern, std::uint64_t seed,
                                 const SceneConfig& cfg = {});

/// Raises transmittance toward clear on a seeded patchwork and softens the
/// pattern edges (blur sigma = 2 * wear px).
[[nodiscard]] Scene apply_wear(const Scene& scene, double wear_level);

/// Mean transmittance of the clear phase minus that of the tinted phase, using
/// the pattern's nominal geometry (interior pixels only).
[[nodiscard]] double pattern_contrast(const Scene& scene);

struct Jacobian2 {
  double xx = 0.0;  // d(dx)/dx
  double xy = 0.0;  // d(dx)/dy
  double yx = 0.0;
  double yy = 0.0;
  /// Largest singular value.
  [[nodiscard]] double norm() const noexcept;
};

/// Analytic displacement field u(X) over material (rest) coordinates: a radial
/// indentation bump, a tangential shift of the contact with a cosine falloff,
/// and an optional rigid translation.
struct DeformationField {
  int width = kSensorWidth;
  int height = kSensorHeight;
  Point2 center;
  double depth_mm = 0.0;
  double radius_px = 40.0;
  double alpha_px_per_mm = 0.0;
  Point2 shift;
  double falloff_px = 0.0;
  Point2 uniform;
  double max_strain = 0.0;

  [[nodiscard]] Point2 displacement(double x, double y) const noexcept;
  [[nodiscard]] Jacobian2 jacobian(double x, double y) const noexcept;
  [[nodiscard]] bool in_contact(double x, double y) const noexcept;
  /// Radius around `center` outside which only the uniform term remains.
  [[nodiscard]] double support_radius() const noexcept;
  /// Upper bound of |u - uniform|.
  [[nodiscard]] double max_local_displacement() const noexcept;
  /// Peak Jacobian norm over the pixel grid.
  [[nodiscard]] double compute_max_strain() const;
  /// Solves X + u(X) = p by fixed-point iteration.
  [[nodiscard]] Point2 material_point(Point2 p) const noexcept;
};

struct DenseField {
  int width = 0;
  int height = 0;
  std::vector<float> dx;
  std::vector<float> dy;
  std::vector<std::uint8_t> contact;
};

[[nodiscard]] DenseField rasterize(const DeformationField& field);

/// Radial bump u(r) = alpha*depth*(r/R)*exp(1-(r/R)^2), zero beyond 3R.
/// alpha is set so that max_strain = strain_per_mm * depth.
[[nodiscard]] DeformationField indentation_field(Point2 center, double depth_mm, double radius_px,
                                                 double strain_per_mm = 0.15);

[[nodiscard]] DeformationField shear_field(const DeformationField& contact, Point2 shift,
                                           double falloff_px);

[[nodiscard]] DeformationField translation_field(Point2 shift);

enum class MotionLabel { horizontal, vertical, diagonal, normal_load, circular };

[[nodiscard]] std::string_view to_string(MotionLabel m) noexcept;
[[nodiscard]] MotionLabel parse_motion(std::string_view name);
[[nodiscard]] const std::array<MotionLabel, 5>& all_motions() noexcept;

struct GridCell {
  int col = 1;
  int row = 1;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct MotionConfig {
  double depth_mm = 1.0;
  double radius_px = 40.0;
  double strain_per_mm = 0.15;
  double shear_px = 8.0;
  double falloff_px = 48.0;
  double cell_spacing_x = 120.0;  // px between contact positions
  double cell_spacing_y = 80.0;

  void validate() const;
  friend bool operator==(const MotionConfig&, const MotionConfig&) = default;
};

void to_json(nlohmann::json& j, const MotionConfig& cfg);
void from_json(const nlohmann::json& j, MotionConfig& cfg);

[[nodiscard]] Point2 cell_center(GridCell cell, const MotionConfig& cfg);

/// Frame 0 is at rest. The indenter ramps in over the first quarter, performs
/// the tangential excursion (out and back in both directions, or an orbit),
/// and is released over the last quarter.
[[nodiscard]] std::vector<DeformationField> script_motion(MotionLabel motion, GridCell cell,
                                                          int frames,
                                                          const MotionConfig& cfg = {});

struct PhotometricConfig {
  double noise_sigma = 2.0 / 255.0;
  std::array<double, 3> backlight{1.0, 0.86, 0.68};
  double exposure = 0.92;
  double vignette = 0.25;             // relative falloff at the raster corner
  double contact_contrast = 0.6;      // c in the compression factor (1 - c*p)
  double contact_darkening = 0.12;    // brightness drop at full pressure
  double pressure_gain = 3.0;
  double pressure_ref_depth_mm = 1.0;
  double local_mean_sigma = 8.0;

  void validate() const;
  friend bool operator==(const PhotometricConfig&, const PhotometricConfig&) = default;
};

void to_json(nlohmann::json& j, const PhotometricConfig& cfg);
void from_json(const nlohmann::json& j, PhotometricConfig& cfg);

/// Contact pressure proxy in [0,1] at material point (x, y).
[[nodiscard]] double pressure_proxy(const DeformationField& field, const PhotometricConfig& photo,
                                    double x, double y) noexcept;

/// Warped, contact-modulated skin appearance before illumination and noise
/// (texture times transmittance, in [0,1]).
[[nodiscard]] GrayFrame render_appearance(const Scene& scene, const DeformationField& field,
                                          const PhotometricConfig& photo);

[[nodiscard]] Frame render_frame(const Scene& scene, const DeformationField& field,
                                 const PhotometricConfig& photo, std::uint64_t noise_seed);

struct GroundTruth {
  MotionLabel motion_label = MotionLabel::normal_load;
  std::string variant;
  GridCell cell;
  std::vector<DeformationField> frames;
  /// Material points written as samples (cell centres plus the contact centre).
  std::vector<Point2> sample_points;

  [[nodiscard]] int frame_count() const noexcept { return static_cast<int>(frames.size()); }
};

void to_json(nlohmann::json& j, const GroundTruth& truth);
void from_json(const nlohmann::json& j, GroundTruth& truth);

[[nodiscard]] GroundTruth load_truth(const std::filesystem::path& path);

struct CorpusVariant {
  std::string name;
  MarkerDesign design = MarkerDesign::grey_squares;
  double wear = 0.0;
  friend bool operator==(const CorpusVariant&, const CorpusVariant&) = default;
};

struct CorpusConfig {
  std::vector<CorpusVariant> variants{{"dense_ink", MarkerDesign::dense_ink, 0.0},
                                      {"grey_lines", MarkerDesign::grey_lines, 0.0},
                                      {"grey_lines_worn", MarkerDesign::grey_lines, 0.6},
                                      {"grey_squares", MarkerDesign::grey_squares, 0.0}};
  std::vector<MotionLabel> motions{all_motions().begin(), all_motions().end()};
  std::vector<GridCell> cells{{0, 0}, {1, 0}, {2, 0}, {0, 1}, {1, 1},
                              {2, 1}, {0, 2}, {1, 2}, {2, 2}};
  int frames = 40;
  std::uint64_t seed = 0;
  std::string image_format = "png";
  SceneConfig scene;
  MotionConfig motion;
  PhotometricConfig photo;

  void validate() const;
};

void to_json(nlohmann::json& j, const CorpusConfig& cfg);
void from_json(const nlohmann::json& j, CorpusConfig& cfg);

struct SequenceSpec {
  std::string id;
  CorpusVariant variant;
  MotionLabel motion = MotionLabel::normal_load;
  GridCell cell;
  std::uint64_t scene_seed = 0;
  std::uint64_t noise_seed = 0;
};

/// Every variant x motion x cell, in that nesting order. Scene and noise seeds
/// depend on motion and cell only, so designs are compared on identical
/// texture, contact and noise.
[[nodiscard]] std::vector<SequenceSpec> plan_corpus(const CorpusConfig& cfg);

[[nodiscard]] MarkerPattern variant_pattern(const CorpusVariant& variant);

struct GeneratedSequence {
  SequenceSpec spec;
  FrameSequence sequence;
  GroundTruth truth;
};

[[nodiscard]] GeneratedSequence render_sequence(const CorpusConfig& cfg, const SequenceSpec& spec);

/// Writes `<out>/<id>/frame_*.png`, `sequence.json`, `truth.json` and
/// `meta.json` per sequence plus `<out>/corpus.json`. `jobs` > 1 renders
/// sequences on worker threads; output does not depend on it.
void generate_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir, int jobs = 1);

}  // namespace magicskin
