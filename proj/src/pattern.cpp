#include "magicskin/pattern.hpp"

#include "json_util.hpp"
#include "magicskin/error.hpp"

namespace magicskin {

std::string_view to_string(MarkerDesign design) noexcept {
  switch (design) {
    case MarkerDesign::clear: return "clear";
    case MarkerDesign::dense_ink: return "dense_ink";
    case MarkerDesign::grey_lines: return "grey_lines";
    case MarkerDesign::grey_squares: return "grey_squares";
  }
  return "unknown";
}

MarkerDesign parse_design(std::string_view name) {
  for (auto d : {MarkerDesign::clear, MarkerDesign::dense_ink, MarkerDesign::grey_lines,
                 MarkerDesign::grey_squares}) {
    if (name == to_string(d)) return d;
  }
  throw Error(ErrorCode::ConfigError, "unknown marker design '" + std::string(name) +
                                          "' (expected clear, dense_ink, grey_lines, grey_squares)");
}

MarkerPattern MarkerPattern::make(MarkerDesign design) {
  MarkerPattern p;
  p.design = design;
  switch (design) {
    case MarkerDesign::clear: p.tint_transmittance = 1.0; break;
    case MarkerDesign::dense_ink: p.tint_transmittance = 0.02; break;
    case MarkerDesign::grey_lines:
    case MarkerDesign::grey_squares: p.tint_transmittance = 0.55; break;
  }
  return p;
}

void MarkerPattern::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, "pattern: " + m); };
  if (cols <= 0 || rows <= 0) fail("grid dims must be > 0");
  if (!(square_mm > 0.0) || !(spacing_mm > 0.0)) fail("square and spacing must be > 0");
  if (!(px_per_mm > 0.0)) fail("px_per_mm must be > 0");
  if (!(tint_transmittance >= 0.0 && tint_transmittance <= 1.0)) {
    fail("tint_transmittance must be in [0,1]");
  }
  if (design == MarkerDesign::dense_ink && !(tint_transmittance < 0.1)) {
    fail("dense_ink transmittance must be < 0.1");
  }
  if (design == MarkerDesign::clear && tint_transmittance != 1.0) {
    fail("clear design must have transmittance 1.0");
  }
}

void to_json(nlohmann::json& j, const MarkerPattern& p) {
  j = nlohmann::json{{"design", std::string(to_string(p.design))},
                     {"cols", p.cols},
                     {"rows", p.rows},
                     {"square_mm", p.square_mm},
                     {"spacing_mm", p.spacing_mm},
                     {"tint_transmittance", p.tint_transmittance},
                     {"px_per_mm", p.px_per_mm}};
}

void from_json(const nlohmann::json& j, MarkerPattern& p) {
  constexpr std::string_view ctx = "pattern";
  detail::check_keys(j,
                     {"design", "cols", "rows", "square_mm", "spacing_mm", "tint_transmittance",
                      "px_per_mm"},
                     ctx);
  std::string design = "grey_squares";
  detail::read_optional(j, "design", design, ctx);
  MarkerPattern out = MarkerPattern::make(parse_design(design));
  detail::read_optional(j, "cols", out.cols, ctx);
  detail::read_optional(j, "rows", out.rows, ctx);
  detail::read_optional(j, "square_mm", out.square_mm, ctx);
  detail::read_optional(j, "spacing_mm", out.spacing_mm, ctx);
  detail::read_optional(j, "tint_transmittance", out.tint_transmittance, ctx);
  detail::read_optional(j, "px_per_mm", out.px_per_mm, ctx);
  out.validate();
  p = out;
}

}  // namespace magicskin
