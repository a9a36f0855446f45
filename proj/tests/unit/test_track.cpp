#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

#include "../oracles/block_match_oracle.hpp"
#include "helpers.hpp"
#include "magicskin/error.hpp"
#include "magicskin/mask.hpp"
#include "magicskin/metrics.hpp"
#include "magicskin/simulate.hpp"
#include "magicskin/track.hpp"

using namespace magicskin;

namespace {

TrackConfig small_window() {
  TrackConfig cfg;
  cfg.lk_window = 31;
  return cfg;
}

std::vector<Point2> interior_grid(int w, int h, int margin, int step) {
  std::vector<Point2> pts;
  for (int y = margin; y < h - margin; y += step)
    for (int x = margin; x < w - margin; x += step) pts.push_back({x + 0.3, y + 0.6});
  return pts;
}

double median(std::vector<double> v) { return percentile(std::move(v), 50.0); }

std::vector<double> flow_errors(const std::vector<FlowVec>& flow, double dx, double dy) {
  std::vector<double> e;
  for (const auto& f : flow) e.push_back(std::hypot(f.dx - dx, f.dy - dy));
  return e;
}

FrameSequence zero_motion_sequence(MarkerDesign design, int frames) {
  const auto scene = render_scene(MarkerPattern::make(design), 21);
  FrameSequence seq;
  for (int i = 0; i < frames; ++i) {
    Frame f = render_frame(scene, DeformationField{}, {}, 1000 + static_cast<std::uint64_t>(i));
    f.set_index(i);
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

}  // namespace

TEST_SUITE("track") {
  TEST_CASE("gftt finds checkerboard corners") {
    const int n = 96, cell = 8;
    GrayFrame g(n, n);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) g.at(x, y) = ((x / cell + y / cell) % 2) ? 0.8f : 0.2f;
    TrackConfig cfg;
    cfg.border_margin = 4;
    const auto kp = detect_gftt(g, Mask(n, n, MaskStage::geometry, 1), cfg);
    REQUIRE(kp.points.size() > 50);
    for (const auto& p : kp.points) {
      const double cx = std::round((p.x + 0.5) / cell) * cell - 0.5;
      const double cy = std::round((p.y + 0.5) / cell) * cell - 0.5;
      CHECK(std::hypot(p.x - cx, p.y - cy) <= 1.0);
    }
    CHECK(std::is_sorted(kp.responses.rbegin(), kp.responses.rend()));
  }

  TEST_CASE("gftt on a constant image has no features") {
    try {
      (void)detect_gftt(GrayFrame(64, 64, 0.5f), Mask(64, 64, MaskStage::geometry, 1), {});
      FAIL("expected NoFeatures");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoFeatures);
    }
  }

  TEST_CASE("translucent squares give more features than dense ink") {
    auto count = [](MarkerDesign d) {
      const auto pattern = MarkerPattern::make(d);
      const auto pre = testutil::static_pre(d);
      const auto sel = select_mask(pre, pattern);
      return detect_gftt(pre.gray_enhanced, sel.mask, {}).points.size();
    };
    CHECK(count(MarkerDesign::grey_squares) > count(MarkerDesign::dense_ink));
  }

  TEST_CASE("pyramid sizes and clamping") {
    const auto p = build_pyramid(testutil::random_gray(576, 432, 1), 3);
    REQUIRE(p.level_count() == 3);
    CHECK(p.level(1).width() == 288);
    CHECK(p.level(1).height() == 216);
    CHECK(p.level(2).width() == 144);
    CHECK(p.level(2).height() == 108);
    CHECK_FALSE(p.clamped());

    const auto small = build_pyramid(testutil::random_gray(20, 20, 2), 3);
    CHECK(small.level_count() == 1);
    CHECK(small.clamped());
    CHECK(small.requested_levels() == 3);

    const auto flat = build_pyramid(GrayFrame(100, 80, 0.25f), 3);
    for (const auto& lvl : flat.levels())
      for (float v : lvl.data()) CHECK(v == doctest::Approx(0.25f).epsilon(1e-6));
  }

  TEST_CASE("window halves per level with a floor") {
    TrackConfig cfg;
    CHECK(cfg.window_at_level(0) == 155);
    CHECK(cfg.window_at_level(1) == 77);
    CHECK(cfg.window_at_level(2) == 39);
    CHECK(cfg.window_at_level(4) == 15);
    cfg.lk_window = 11;
    CHECK(cfg.window_at_level(2) == 11);
  }

  TEST_CASE("zero motion gives zero flow") {
    const GrayFrame g = testutil::texture(200, 160, 3);
    const auto p = build_pyramid(g, 3);
    const auto pts = interior_grid(200, 160, 30, 12);
    const auto flow = lk_step(p, p, pts, small_window());
    for (const auto& f : flow) {
      CHECK(f.converged);
      CHECK(std::hypot(f.dx, f.dy) < 1e-3);
    }
    const auto fb = fb_validate(p, p, pts, flow, small_window());
    for (const auto& c : fb) CHECK(c.error < 1e-3);
  }

  TEST_CASE("integer translation agrees with block matching") {
    const GrayFrame a = testutil::texture(200, 160, 4);
    const GrayFrame b = testutil::shifted(a, 3.0, -2.0);
    const auto pa = build_pyramid(a, 3);
    const auto pb = build_pyramid(b, 3);
    const auto pts = interior_grid(200, 160, 30, 12);
    const auto flow = lk_step(pa, pb, pts, small_window());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(flow[i].converged);
      CHECK(std::abs(flow[i].dx - 3.0) < 0.05);
      CHECK(std::abs(flow[i].dy + 2.0) < 0.05);
      const auto bm = oracle::block_match(a, b, static_cast<int>(pts[i].x), static_cast<int>(pts[i].y),
                                          7, 5);
      CHECK(std::abs(flow[i].dx - bm.dx) <= 0.25);
      CHECK(std::abs(flow[i].dy - bm.dy) <= 0.25);
    }
  }

  TEST_CASE("sub-pixel translation") {
    const GrayFrame a = testutil::texture(200, 160, 5);
    const GrayFrame b = testutil::shifted(a, 0.5, 0.25);
    const auto pa = build_pyramid(a, 3);
    const auto pb = build_pyramid(b, 3);
    const auto pts = interior_grid(200, 160, 30, 12);
    const auto flow = lk_step(pa, pb, pts, small_window());
    CHECK(median(flow_errors(flow, 0.5, 0.25)) < 0.05);

    const auto fb = fb_validate(pa, pb, pts, flow, small_window());
    for (const auto& c : fb) CHECK(c.error < 0.02);

    std::vector<Point2> landed;
    for (std::size_t i = 0; i < pts.size(); ++i) landed.push_back({pts[i].x + 0.5, pts[i].y + 0.25});
    const auto back = lk_step(pb, pa, landed, small_window());
    const auto fb_rev = fb_validate(pb, pa, landed, back, small_window());
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(std::abs(fb[i].error - fb_rev[i].error) < 0.01);
  }

  TEST_CASE("default window on a full-size frame") {
    const GrayFrame a = testutil::texture(576, 432, 6);
    const GrayFrame b = testutil::shifted(a, 0.5, 0.25);
    const auto pa = build_pyramid(a, 3);
    const auto pb = build_pyramid(b, 3);
    const auto pts = interior_grid(576, 432, 90, 40);
    const auto flow = lk_step(pa, pb, pts, {});
    CHECK(median(flow_errors(flow, 0.5, 0.25)) < 0.05);
  }

  TEST_CASE("occluded landing raises the fb error") {
    const int w = 200, h = 160;
    const GrayFrame a = testutil::texture(w, h, 8);
    GrayFrame b = testutil::shifted(a, 1.0, 0.5);
    const double ox = 100, oy = 80, r = 30;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double d = std::hypot(x - ox, y - oy);
        if (d < r) b.at(x, y) = static_cast<float>(0.35 + 0.1 * (b.at(x, y) - 0.5));
      }
    const auto pa = build_pyramid(a, 3);
    const auto pb = build_pyramid(b, 3);
    const std::vector<Point2> inside{{ox, oy}, {ox + 8, oy - 6}, {ox - 9, oy + 5}};
    const std::vector<Point2> outside{{40, 40}, {160, 40}, {40, 125}, {160, 125}};
    auto fb_of = [&](const std::vector<Point2>& pts) {
      const auto flow = lk_step(pa, pb, pts, small_window());
      const auto fb = fb_validate(pa, pb, pts, flow, small_window());
      double m = 0.0;
      for (const auto& c : fb) m += c.error;
      return m / static_cast<double>(fb.size());
    };
    CHECK(fb_of(inside) > 2.0 * fb_of(outside));
  }

  TEST_CASE("normal equations match dense least squares") {
    std::mt19937_64 rng(17);
    std::normal_distribution<float> grad(0.0f, 0.05f), noise(0.0f, 0.01f);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 21 * 21;
      std::vector<float> ix(n), iy(n), err(n);
      const double tx = 1.5 * std::sin(trial), ty = -0.7 * std::cos(trial);
      for (int i = 0; i < n; ++i) {
        ix[i] = grad(rng);
        iy[i] = grad(rng);
        err[i] = static_cast<float>(-(ix[i] * tx + iy[i] * ty)) + noise(rng);
      }
      Eigen::MatrixXd A(n, 2);
      Eigen::VectorXd e(n);
      for (int i = 0; i < n; ++i) {
        A(i, 0) = ix[i];
        A(i, 1) = iy[i];
        e(i) = err[i];
      }
      const Eigen::Vector2d ref = A.colPivHouseholderQr().solve(-e);
      const auto sys = lk_normal_equations(ix, iy, err, 21);
      const auto step = solve_lk_system(sys);
      REQUIRE(step.has_value());
      CHECK(std::abs(step->x - ref(0)) <= 1e-6);
      CHECK(std::abs(step->y - ref(1)) <= 1e-6);
      const Eigen::Matrix2d G = A.transpose() * A;
      CHECK(min_eigenvalue(sys.g11, sys.g12, sys.g22) ==
            doctest::Approx(G.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff()).epsilon(1e-5));
    }
    CHECK_FALSE(solve_lk_system(LkSystem{1.0, 1.0, 1.0, 0.5, 0.5}).has_value());
  }

  TEST_CASE("zero-motion sequence keeps every point") {
    const auto seq = zero_motion_sequence(MarkerDesign::grey_squares, 30);
    const auto pattern = MarkerPattern::make(MarkerDesign::grey_squares);
    const auto report = track_sequence(seq, pattern, {}, {});
    const auto m = compute_metrics(report);
    CHECK(m.retention == 100.0);
    CHECK(m.fb_mean < 1e-3);
    for (const auto& t : report.tracks) {
      for (const auto& p : t.positions) CHECK(std::hypot(p.x - t.positions[0].x, p.y - t.positions[0].y) < 0.05);
    }
    CHECK(report.frame_count() == 30);

    const auto again = track_sequence(seq, pattern, {}, {});
    REQUIRE(again.tracks.size() == report.tracks.size());
    for (std::size_t i = 0; i < report.tracks.size(); ++i) {
      CHECK(again.tracks[i].positions == report.tracks[i].positions);
      CHECK(again.tracks[i].fb_errors == report.tracks[i].fb_errors);
    }
  }

  TEST_CASE("noise-free static sequence is exactly still") {
    const auto scene = render_scene(MarkerPattern::make(MarkerDesign::grey_squares), 3);
    PhotometricConfig quiet;
    quiet.noise_sigma = 0.0;
    FrameSequence seq;
    for (int i = 0; i < 5; ++i) {
      Frame f = render_frame(scene, DeformationField{}, quiet, 1);
      f.set_index(i);
      seq.frames.push_back(std::move(f));
    }
    const auto report = track_sequence(seq, MarkerPattern::make(MarkerDesign::grey_squares), {}, {});
    for (const auto& t : report.tracks)
      for (const auto& p : t.positions) CHECK(std::hypot(p.x - t.positions[0].x, p.y - t.positions[0].y) < 1e-3);
  }

  TEST_CASE("clear design has nothing to track") {
    const auto seq = zero_motion_sequence(MarkerDesign::clear, 2);
    try {
      (void)track_sequence(seq, MarkerPattern::make(MarkerDesign::clear), {}, {});
      FAIL("expected NoFeatures");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoFeatures);
    }
  }

  TEST_CASE("failed mask degrades to full-frame detection") {
    const auto pattern = MarkerPattern::make(MarkerDesign::grey_lines);
    const auto scene = apply_wear(render_scene(pattern, 21), 1.0);
    FrameSequence seq;
    for (int i = 0; i < 3; ++i) {
      Frame f = render_frame(scene, DeformationField{}, {}, 1000 + static_cast<std::uint64_t>(i));
      f.set_index(i);
      seq.frames.push_back(std::move(f));
    }
    const auto report = track_sequence(seq, pattern, {}, {});
    CHECK_FALSE(report.mask_health.passed);
    CHECK(report.mask_stage == MaskStage::fallback);
    CHECK(report.tracks.size() > 100);
    TrackConfig strict;
    strict.full_frame_fallback = false;
    try {
      (void)track_sequence(seq, pattern, {}, strict);
      FAIL("expected NoFeatures");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoFeatures);
    }
  }

  TEST_CASE("config validation") {
    TrackConfig cfg;
    cfg.lk_window = 20;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.pyramid_levels = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    CHECK(cfg.effective_margin(576, 432) == 77);
  }
}
