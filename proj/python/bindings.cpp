#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "magicskin/error.hpp"
#include "magicskin/gaussian.hpp"
#include "magicskin/image_io.hpp"
#include "magicskin/mask.hpp"
#include "magicskin/metrics.hpp"
#include "magicskin/preprocess.hpp"
#include "magicskin/simulate.hpp"
#include "magicskin/track.hpp"

namespace py = pybind11;
using namespace magicskin;
using nlohmann::json;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Frame to_frame(const U8Array& a, int index = 0) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw Error(ErrorCode::InvalidArgument, "expected an HxWx3 uint8 array");
  const auto h = static_cast<int>(a.shape(0));
  const auto w = static_cast<int>(a.shape(1));
  std::vector<std::uint8_t> data(a.data(), a.data() + a.size());
  return Frame(w, h, std::move(data), index);
}

U8Array from_frame(const Frame& f) {
  U8Array out({f.height(), f.width(), 3});
  std::memcpy(out.mutable_data(), f.data().data(), f.data().size());
  return out;
}

F32Array from_gray(const GrayFrame& g) {
  F32Array out({g.height(), g.width()});
  std::memcpy(out.mutable_data(), g.data().data(), g.size() * sizeof(float));
  return out;
}

GrayFrame to_gray_frame(const F32Array& a) {
  if (a.ndim() != 2) throw Error(ErrorCode::InvalidArgument, "expected an HxW float array");
  std::vector<float> data(a.data(), a.data() + a.size());
  return GrayFrame(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), std::move(data));
}

template <typename T>
T from_json_str(const std::string& s) {
  if (s.empty()) return T{};
  return json::parse(s).get<T>();
}

FrameSequence to_sequence(const std::vector<U8Array>& frames, double fps) {
  FrameSequence seq;
  seq.fps = fps;
  for (std::size_t i = 0; i < frames.size(); ++i) seq.frames.push_back(to_frame(frames[i], static_cast<int>(i)));
  return seq;
}

}  // namespace

PYBIND11_MODULE(_magicskin, m) {
  m.doc() = "MagicSkin tactile image pipeline";

  static PyObject* error = py::exception<Error>(m, "MagicSkinError", PyExc_RuntimeError).inc_ref().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string msg = std::string(to_string(e.code())) + ": " + e.what();
      PyErr_SetString(error, msg.c_str());
    } catch (const json::exception& e) {
      PyErr_SetString(error, (std::string("ConfigError: ") + e.what()).c_str());
    }
  });

  m.def("load_frame", [](const std::string& path) { return from_frame(load_frame(path)); },
        py::arg("path"));
  m.def("save_frame", [](const U8Array& a, const std::string& path) { save_frame(to_frame(a), path); },
        py::arg("frame"), py::arg("path"));
  m.def("load_sequence",
        [](const std::string& dir) {
          const auto seq = load_sequence(dir);
          py::list out;
          for (const auto& f : seq.frames) out.append(from_frame(f));
          return py::make_tuple(out, seq.fps);
        },
        py::arg("dir"));
  m.def("to_gray", [](const U8Array& a) { return from_gray(to_gray(to_frame(a))); }, py::arg("frame"));

  m.def("preprocess",
        [](const U8Array& a, const std::string& cfg) {
          const auto pre = preprocess_pipeline(to_frame(a), from_json_str<PreprocessConfig>(cfg));
          py::dict d;
          d["color"] = from_frame(pre.color);
          d["gray_enhanced"] = from_gray(pre.gray_enhanced);
          d["crop_offset"] = py::make_tuple(pre.crop_offset.x, pre.crop_offset.y);
          return d;
        },
        py::arg("frame"), py::arg("config_json") = "");
  m.def("clahe",
        [](const F32Array& a, double clip, int cols, int rows) {
          return from_gray(clahe(to_gray_frame(a), clip, {cols, rows}));
        },
        py::arg("gray"), py::arg("clip_limit") = 2.0, py::arg("cols") = 8, py::arg("rows") = 8);
  m.def("gaussian_blur",
        [](const F32Array& a, double sigma) { return from_gray(gaussian_blur(to_gray_frame(a), sigma)); },
        py::arg("gray"), py::arg("sigma"));

  m.def("pattern_json", [](const std::string& design) {
    return json(MarkerPattern::make(parse_design(design))).dump();
  }, py::arg("design"));

  m.def("mask_health",
        [](const U8Array& a, const std::string& design, const std::string& mask_cfg) {
          const auto pattern = MarkerPattern::make(parse_design(design));
          const auto pre = preprocess_pipeline(to_frame(a), {});
          const auto sel = select_mask(pre, pattern, from_json_str<MaskConfig>(mask_cfg));
          json h = sel.health;
          h["stage"] = sel.mask.stage == MaskStage::geometry ? "geometry" : "fallback";
          py::array_t<std::uint8_t> bits({sel.mask.height, sel.mask.width});
          std::memcpy(bits.mutable_data(), sel.mask.bits.data(), sel.mask.bits.size());
          return py::make_tuple(h.dump(), bits);
        },
        py::arg("frame"), py::arg("design"), py::arg("mask_config_json") = "");

  m.def("detect_keypoints",
        [](const U8Array& a, const std::string& design, const std::string& track_cfg) {
          const auto pattern = MarkerPattern::make(parse_design(design));
          const auto pre = preprocess_pipeline(to_frame(a), {});
          const auto sel = select_mask(pre, pattern);
          const auto kp = detect_gftt(pre.gray_enhanced, sel.mask, from_json_str<TrackConfig>(track_cfg));
          std::vector<std::pair<double, double>> pts;
          for (const auto& p : kp.points) pts.emplace_back(p.x, p.y);
          return pts;
        },
        py::arg("frame"), py::arg("design"), py::arg("track_config_json") = "");

  m.def("track_frames",
        [](const std::vector<U8Array>& frames, const std::string& design, double fps,
           const std::string& pre_cfg, const std::string& track_cfg) {
          const auto seq = to_sequence(frames, fps);
          const auto pattern = MarkerPattern::make(parse_design(design));
          TrackReport r;
          {
            py::gil_scoped_release release;
            r = track_sequence(seq, pattern, from_json_str<PreprocessConfig>(pre_cfg),
                               from_json_str<TrackConfig>(track_cfg));
          }
          return json(r).dump();
        },
        py::arg("frames"), py::arg("design"), py::arg("fps") = 40.0,
        py::arg("preprocess_config_json") = "", py::arg("track_config_json") = "");

  m.def("compute_metrics",
        [](const std::vector<std::string>& reports, const std::string& pooling) {
          std::vector<TrackReport> rs;
          for (const auto& s : reports) rs.push_back(json::parse(s).get<TrackReport>());
          const FbPooling p = pooling == "per_point" ? FbPooling::per_point : FbPooling::per_step;
          return json(compute_metrics(rs, p)).dump();
        },
        py::arg("reports_json"), py::arg("pooling") = "per_step");

  m.def("compute_accuracy",
        [](const std::string& report, const std::string& truth) {
          return json(compute_accuracy(json::parse(report).get<TrackReport>(),
                                       json::parse(truth).get<GroundTruth>()))
              .dump();
        },
        py::arg("report_json"), py::arg("truth_json"));

  m.def("render_static",
        [](const std::string& design, std::uint64_t seed, double wear) {
          Scene scene = render_scene(MarkerPattern::make(parse_design(design)), seed);
          if (wear > 0.0) scene = apply_wear(scene, wear);
          return from_frame(render_frame(scene, DeformationField{}, {}, seed + 1));
        },
        py::arg("design"), py::arg("seed") = 0, py::arg("wear") = 0.0);

  m.def("render_translation",
        [](const std::string& design, std::uint64_t seed, double dx, double dy) {
          const Scene scene = render_scene(MarkerPattern::make(parse_design(design)), seed);
          return from_frame(render_frame(scene, translation_field({dx, dy}), {}, seed + 1));
        },
        py::arg("design"), py::arg("seed"), py::arg("dx"), py::arg("dy"));

  m.def("default_corpus_config", [] { return json(CorpusConfig{}).dump(); });
  m.def("plan_corpus",
        [](const std::string& cfg) {
          std::vector<std::string> ids;
          for (const auto& s : plan_corpus(from_json_str<CorpusConfig>(cfg))) ids.push_back(s.id);
          return ids;
        },
        py::arg("config_json") = "");
  m.def("generate_corpus",
        [](const std::string& cfg, const std::string& out, int jobs) {
          const auto c = from_json_str<CorpusConfig>(cfg);
          py::gil_scoped_release release;
          generate_corpus(c, out, jobs);
        },
        py::arg("config_json"), py::arg("out_dir"), py::arg("jobs") = 1);
}
