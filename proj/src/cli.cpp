#include "magicskin/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "json_util.hpp"
#include "magicskin/image_io.hpp"
#include "magicskin/metrics.hpp"
#include "magicskin/overlay.hpp"
#include "magicskin/parallel.hpp"
#include "magicskin/simulate.hpp"

namespace magicskin::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr const char* kManifestName = "run_manifest.json";

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void write_json_file(const json& j, const fs::path& path) { write_text(path, j.dump(2) + "\n"); }

json read_json_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw Error(fs::exists(path) ? ErrorCode::IoError : ErrorCode::FileNotFound,
                "cannot read " + path.string());
  }
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

std::shared_ptr<spdlog::logger> logger() {
  static const auto log = [] {
    auto l = spdlog::stderr_color_mt("magicskin");
    l->set_pattern("[%l] %v");
    l->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("MAGICSKIN_LOG")) {
      const std::string v = env;
      if (v == "error") l->set_level(spdlog::level::err);
      else if (v == "warn") l->set_level(spdlog::level::warn);
      else if (v == "info") l->set_level(spdlog::level::info);
      else if (v == "debug") l->set_level(spdlog::level::debug);
      else l->warn("ignoring MAGICSKIN_LOG='{}' (expected error, warn, info or debug)", v);
    }
    return l;
  }();
  return log;
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  return p.lexically_relative(base).generic_string();
}

PipelineConfig load_pipeline_config(const std::optional<fs::path>& path, RunManifest& manifest) {
  PipelineConfig cfg;
  if (path) {
    cfg = read_config_file(*path).get<PipelineConfig>();
    manifest.config_paths.push_back(path->string());
  }
  return cfg;
}

// Pattern for a sequence: explicit argument, else the meta.json written by
// `simulate` next to the frames.
MarkerPattern resolve_pattern(const std::optional<std::string>& arg, const fs::path& seq_dir) {
  if (arg) return parse_pattern_arg(*arg);
  const fs::path meta = seq_dir / "meta.json";
  if (fs::exists(meta)) {
    const json m = read_json_file(meta);
    if (m.contains("pattern")) {
      try {
        return m.at("pattern").get<MarkerPattern>();
      } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, meta.string() + ": " + e.what());
      }
    }
  }
  throw Error(ErrorCode::ConfigError,
              "no marker pattern for " + seq_dir.string() + " (pass --pattern)");
}

struct TrackJob {
  std::string id;  // empty for a single sequence
  fs::path input;
  fs::path out;
};

struct TrackOutcome {
  bool ok = false;
  std::string error;
  TrackingMetrics metrics;
};

TrackOutcome track_one(const TrackJob& job, const TrackOptions& opt, const PipelineConfig& cfg) {
  TrackOutcome outcome;
  const MarkerPattern pattern = resolve_pattern(opt.pattern, job.input);
  const FrameSequence seq = load_sequence(job.input);
  ensure_dir(job.out);
  if (fs::exists(job.input / "meta.json")) {
    std::error_code ec;
    fs::copy_file(job.input / "meta.json", job.out / "meta.json",
                  fs::copy_options::overwrite_existing, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot copy meta.json: " + ec.message());
  }
  TrackReport report;
  try {
    report = track_sequence(seq, pattern, cfg.preprocess, cfg.track, cfg.mask);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoFeatures) throw;
    outcome.error = e.what();
    if (!e.stage().empty()) outcome.error = e.stage() + ": " + outcome.error;
    return outcome;
  }
  write_json_file(report, job.out / "report.json");
  if (opt.overlay) {
    const fs::path dir = job.out / "overlay";
    ensure_dir(dir);
    for (int f = 0; f < static_cast<int>(seq.frames.size()); ++f) {
      const Frame base = crop_border(seq.frames[f], cfg.preprocess.crop_fraction).frame;
      save_frame(draw_tracks(base, report, f), dir / frame_filename(f, "png"));
    }
  }
  outcome.ok = true;
  outcome.metrics = compute_metrics(report);
  return outcome;
}

// Reports found under `path`: the file itself, `path/report.json`, or
// `path/*/report.json` in name order.
std::vector<fs::path> find_reports(const fs::path& path) {
  if (fs::is_regular_file(path)) return {path};
  if (!fs::is_directory(path)) throw Error(ErrorCode::FileNotFound, "no such input: " + path.string());
  if (fs::exists(path / "report.json")) return {path / "report.json"};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_directory() && fs::exists(e.path() / "report.json")) out.push_back(e.path() / "report.json");
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error(ErrorCode::EmptyDirectory, "no report.json under " + path.string());
  return out;
}

std::string group_of(const fs::path& report_path, const TrackReport& report) {
  const fs::path meta = report_path.parent_path() / "meta.json";
  if (fs::exists(meta)) {
    const json m = read_json_file(meta);
    if (m.contains("variant") && m.at("variant").is_string()) return m.at("variant").get<std::string>();
  }
  return std::string(to_string(report.pattern.design));
}

fs::path truth_for(const fs::path& truth, const fs::path& report_path, std::size_t n_reports) {
  if (fs::is_regular_file(truth)) {
    if (n_reports != 1) {
      throw Error(ErrorCode::InvalidArgument,
                  "a single truth file needs exactly one report (got " +
                      std::to_string(n_reports) + ")");
    }
    return truth;
  }
  const fs::path p = truth / report_path.parent_path().filename() / "truth.json";
  if (!fs::exists(p)) throw Error(ErrorCode::FileNotFound, "missing truth " + p.string());
  return p;
}

}  // namespace

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
      return kConfigError;
    case ErrorCode::FileNotFound:
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::CorruptImage:
    case ErrorCode::IoError:
    case ErrorCode::EmptyDirectory:
    case ErrorCode::NonContiguousIndices:
      return kIoError;
    case ErrorCode::NoFeatures:
      return kNoFeatures;
    case ErrorCode::SequenceMismatch:
      return kSequenceMismatch;
    default:
      return kFailure;
  }
}

void write_manifest(const RunManifest& m, const fs::path& dir) {
  json stages = json::object();
  for (const auto& [name, t] : m.stage_ms) stages[name] = t;
  json j{{"command", m.command},
         {"args", m.args},
         {"config_paths", m.config_paths},
         {"seed", m.seed ? json(*m.seed) : json(nullptr)},
         {"tool_version", m.tool_version},
         {"wall_ms", std::move(stages)},
         {"outputs", m.outputs},
         {"config", m.config}};
  ensure_dir(dir);
  write_json_file(j, dir / kManifestName);
}

void to_json(json& j, const PipelineConfig& c) {
  j = json{{"preprocess", c.preprocess}, {"track", c.track}, {"mask", c.mask}};
}

void from_json(const json& j, PipelineConfig& c) {
  detail::check_keys(j, {"preprocess", "track", "mask"}, "config");
  PipelineConfig out;
  try {
    if (j.contains("preprocess")) out.preprocess = j.at("preprocess").get<PreprocessConfig>();
    if (j.contains("track")) out.track = j.at("track").get<TrackConfig>();
    if (j.contains("mask")) out.mask = j.at("mask").get<MaskConfig>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }
  c = out;
}

json read_config_file(const fs::path& path) { return read_json_file(path); }

MarkerPattern parse_pattern_arg(const std::string& arg) {
  if (arg.ends_with(".json")) {
    try {
      return read_json_file(arg).get<MarkerPattern>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, arg + ": " + e.what());
    }
  }
  return MarkerPattern::make(parse_design(arg));
}

// ---------------------------------------------------------------------------
// Commands

void cmd_simulate(const SimulateOptions& opt, json& summary, RunManifest& manifest) {
  CorpusConfig cfg;
  if (opt.config) {
    try {
      cfg = read_config_file(*opt.config).get<CorpusConfig>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, opt.config->string() + ": " + e.what());
    }
    manifest.config_paths.push_back(opt.config->string());
  }
  if (opt.seed) cfg.seed = *opt.seed;
  cfg.validate();
  manifest.seed = cfg.seed;
  manifest.config = cfg;

  const auto t0 = Clock::now();
  const auto specs = plan_corpus(cfg);
  logger()->info("rendering {} sequences into {}", specs.size(), opt.out.string());
  generate_corpus(cfg, opt.out, opt.jobs);
  manifest.stage_ms.emplace_back("render", ms_since(t0));
  manifest.outputs.push_back("corpus.json");
  for (const auto& s : specs) manifest.outputs.push_back(s.id);
  write_manifest(manifest, opt.out);
  summary = {{"sequences", specs.size()}, {"out", opt.out.string()}, {"seed", cfg.seed}};
}

void cmd_track(const TrackOptions& opt, json& summary, RunManifest& manifest) {
  const PipelineConfig cfg = load_pipeline_config(opt.config, manifest);
  manifest.config = cfg;
  if (!fs::is_directory(opt.input)) {
    throw Error(ErrorCode::FileNotFound, "no such sequence directory: " + opt.input.string());
  }

  std::vector<TrackJob> jobs;
  const fs::path corpus_index = opt.input / "corpus.json";
  const bool corpus = fs::exists(corpus_index);
  if (corpus) {
    const json index = read_json_file(corpus_index);
    try {
      for (const auto& s : index.at("sequences")) {
        const auto id = s.at("id").get<std::string>();
        jobs.push_back({id, opt.input / id, opt.out / id});
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, corpus_index.string() + ": " + e.what());
    }
  } else {
    jobs.push_back({"", opt.input, opt.out});
  }

  const auto t0 = Clock::now();
  std::vector<TrackOutcome> outcomes(jobs.size());
  parallel_for(jobs.size(), opt.jobs, [&](std::size_t i) {
    outcomes[i] = track_one(jobs[i], opt, cfg);
    if (outcomes[i].ok) {
      logger()->info("{}: retention {:.1f}%", jobs[i].input.string(), outcomes[i].metrics.retention);
    } else {
      logger()->warn("{}: {}", jobs[i].input.string(), outcomes[i].error);
    }
  });
  manifest.stage_ms.emplace_back("track", ms_since(t0));

  json results = json::array();
  int failed = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    json r{{"id", jobs[i].id}, {"ok", outcomes[i].ok}};
    if (outcomes[i].ok) {
      r["retention"] = outcomes[i].metrics.retention;
      r["fb_mean"] = outcomes[i].metrics.fb_mean;
      manifest.outputs.push_back(relative_to(jobs[i].out / "report.json", opt.out));
    } else {
      r["error"] = outcomes[i].error;
      ++failed;
    }
    results.push_back(std::move(r));
  }
  if (corpus) write_json_file({{"sequences", results}}, opt.out / "index.json");
  write_manifest(manifest, opt.out);
  summary = corpus ? json{{"sequences", results}, {"failed", failed}} : results.at(0);
  if (failed > 0) {
    const auto first = std::find_if(outcomes.begin(), outcomes.end(),
                                    [](const TrackOutcome& o) { return !o.ok; });
    throw Error(ErrorCode::NoFeatures, std::to_string(failed) + " of " +
                                           std::to_string(jobs.size()) +
                                           " sequences had nothing to track: " + first->error);
  }
}

void cmd_eval(const EvalOptions& opt, json& summary, RunManifest& manifest) {
  if (opt.inputs.empty()) throw Error(ErrorCode::InvalidArgument, "eval needs at least one input");
  std::vector<fs::path> paths;
  for (const auto& in : opt.inputs) {
    auto found = find_reports(in);
    paths.insert(paths.end(), found.begin(), found.end());
  }

  const auto t0 = Clock::now();
  std::vector<std::string> order;
  std::map<std::string, MetricsAccumulator> groups;
  MetricsAccumulator overall;
  AccuracyAccumulator accuracy;
  for (const auto& p : paths) {
    TrackReport report;
    try {
      report = read_json_file(p).get<TrackReport>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, p.string() + ": " + e.what());
    }
    const std::string g = group_of(p, report);
    if (!groups.contains(g)) {
      order.push_back(g);
      groups.emplace(g, MetricsAccumulator{});
    }
    groups.at(g).add(report);
    overall.add(report);
    if (opt.truth) accuracy.add(report, load_truth(truth_for(*opt.truth, p, paths.size())));
  }
  manifest.stage_ms.emplace_back("eval", ms_since(t0));

  std::vector<ComparisonRow> rows;
  json per_design = json::object();
  for (const auto& g : order) {
    rows.push_back({g, groups.at(g).result()});
    per_design[g] = rows.back().metrics;
  }
  const ComparisonTable table = compare_designs(rows);
  ensure_dir(opt.out);
  json metrics{{"overall", overall.result()}, {"per_design", per_design}, {"reports", paths.size()}};
  write_json_file(metrics, opt.out / "metrics.json");
  write_text(opt.out / "comparison.csv", table.to_csv());
  write_text(opt.out / "comparison.txt", table.to_text());
  write_json_file(table, opt.out / "comparison.json");
  manifest.outputs = {"metrics.json", "comparison.csv", "comparison.txt", "comparison.json"};
  summary = {{"metrics", metrics}, {"comparison", table}};
  if (opt.truth) {
    const AccuracyMetrics acc = accuracy.result();
    write_json_file(acc, opt.out / "accuracy.json");
    manifest.outputs.push_back("accuracy.json");
    manifest.config_paths.push_back(opt.truth->string());
    summary["accuracy"] = acc;
  }
  write_manifest(manifest, opt.out);
}

void cmd_inspect(const InspectOptions& opt, json& summary, RunManifest& manifest) {
  const PipelineConfig cfg = load_pipeline_config(opt.config, manifest);
  manifest.config = cfg;
  if (!opt.pattern) throw Error(ErrorCode::ConfigError, "inspect needs --pattern");
  const MarkerPattern pattern = parse_pattern_arg(*opt.pattern);
  const Frame frame = load_frame(opt.frame);
  ensure_dir(opt.out);

  const auto t0 = Clock::now();
  const PipelineStages st = preprocess_stages(frame, cfg.preprocess);
  manifest.stage_ms.emplace_back("preprocess", ms_since(t0));
  const std::vector<std::pair<std::string, Frame>> images{
      {"00_input.png", st.input},
      {"01_cropped.png", st.cropped},
      {"02_balanced.png", st.balanced},
      {"03_retinex.png", st.retinex},
      {"04_gray.png", gray_to_frame(st.gray)},
      {"05_clahe.png", gray_to_frame(st.clahe)},
      {"06_enhanced.png", gray_to_frame(st.enhanced)}};
  for (const auto& [name, img] : images) {
    save_frame(img, opt.out / name);
    manifest.outputs.push_back(name);
  }

  const auto t1 = Clock::now();
  PreprocessedFrame pre;
  pre.color = st.retinex;
  pre.gray_enhanced = st.enhanced;
  pre.crop_offset = st.crop_offset;
  const MaskSelection sel = select_mask(pre, pattern, cfg.mask);
  manifest.stage_ms.emplace_back("mask", ms_since(t1));
  save_pgm(sel.mask.bits, sel.mask.width, sel.mask.height, opt.out / "mask.pgm");
  json health = sel.health;
  health["stage"] = sel.mask.stage == MaskStage::geometry ? "geometry" : "fallback";
  health["geometry"] = sel.geometry_health;
  write_json_file(health, opt.out / "health.json");

  KeypointSet kp;
  std::string detect_error;
  try {
    kp = detect_gftt(st.enhanced, sel.mask, cfg.track);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoFeatures) throw;
    detect_error = e.what();
  }
  const Frame base = draw_mask(gray_to_frame(st.enhanced), sel.mask);
  save_frame(draw_points(base, kp.points), opt.out / "keypoints.png");
  manifest.outputs.insert(manifest.outputs.end(), {"mask.pgm", "health.json", "keypoints.png"});
  write_manifest(manifest, opt.out);
  summary = {{"health", health}, {"keypoints", kp.points.size()}};
  if (!detect_error.empty()) summary["detect_error"] = detect_error;
}

// ---------------------------------------------------------------------------
// Command line

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"MagicSkin tactile image pipeline: simulate, track, evaluate, inspect"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "Print a machine-readable summary on stdout");

  SimulateOptions sim;
  auto* s = app.add_subcommand("simulate", "Render a synthetic corpus with ground truth");
  s->add_option("--config", sim.config, "Corpus config JSON");
  s->add_option("--seed", sim.seed, "Corpus seed (overrides the config)");
  s->add_option("--jobs", sim.jobs, "Worker threads")->check(CLI::PositiveNumber);
  s->add_option("--out", sim.out, "Output directory")->required();
  s->add_flag("--json", as_json);

  TrackOptions trk;
  auto* t = app.add_subcommand("track", "Track one sequence or every sequence of a corpus");
  t->add_option("input", trk.input, "Sequence or corpus directory")->required();
  t->add_option("--pattern", trk.pattern, "Design name or pattern JSON (default: meta.json)");
  t->add_option("--config", trk.config, "Pipeline config JSON");
  t->add_flag("--overlay", trk.overlay, "Write annotated frames");
  t->add_option("--jobs", trk.jobs, "Worker threads")->check(CLI::PositiveNumber);
  t->add_option("--out", trk.out, "Output directory")->required();
  t->add_flag("--json", as_json);

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Metrics, design comparison and accuracy");
  e->add_option("inputs", ev.inputs, "Report files or track output directories")->required();
  e->add_option("--truth", ev.truth, "truth.json or corpus directory");
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_flag("--json", as_json);

  InspectOptions ins;
  auto* i = app.add_subcommand("inspect", "Dump every pipeline stage for one frame");
  i->add_option("frame", ins.frame, "Frame image (PNG or PPM)")->required();
  i->add_option("--pattern", ins.pattern, "Design name or pattern JSON")->required();
  i->add_option("--config", ins.config, "Pipeline config JSON");
  i->add_option("--out", ins.out, "Output directory")->required();
  i->add_flag("--json", as_json);

  if (args.empty()) return kConfigError;
  std::vector<std::string> argv(args.rbegin(), args.rend() - 1);
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kConfigError;
  }

  RunManifest manifest;
  manifest.args.assign(args.begin() + 1, args.end());
  json summary;
  try {
    if (*s) {
      manifest.command = "simulate";
      cmd_simulate(sim, summary, manifest);
    } else if (*t) {
      manifest.command = "track";
      cmd_track(trk, summary, manifest);
    } else if (*e) {
      manifest.command = "eval";
      cmd_eval(ev, summary, manifest);
    } else {
      manifest.command = "inspect";
      cmd_inspect(ins, summary, manifest);
    }
  } catch (const Error& ex) {
    std::string where = ex.stage().empty() ? "" : " [" + ex.stage() + "]";
    logger()->error("{} ({}){}: {}", manifest.command, to_string(ex.code()), where, ex.what());
    if (as_json) {
      std::cout << json{{"error", to_string(ex.code())}, {"message", ex.what()}, {"summary", summary}}
                       .dump()
                << "\n";
    }
    return exit_code_for(ex.code());
  } catch (const std::exception& ex) {
    logger()->error("{}: {}", manifest.command, ex.what());
    return kFailure;
  }
  if (as_json) std::cout << summary.dump() << "\n";
  return kOk;
}

int run_cli(int argc, char** argv) {
  return run_cli(std::vector<std::string>(argv, argv + argc));
}

}  // namespace magicskin::cli
