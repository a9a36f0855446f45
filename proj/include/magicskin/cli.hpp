#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "magicskin/error.hpp"
#include "magicskin/mask.hpp"
#include "magicskin/preprocess.hpp"
#include "magicskin/track.hpp"

namespace magicskin::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Process exit codes. Stable across releases.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kIoError = 3,
  kNoFeatures = 4,
  kSequenceMismatch = 5,
};

[[nodiscard]] int exit_code_for(ErrorCode code) noexcept;

/// Written as `run_manifest.json` into every output directory.
struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  std::vector<std::string> config_paths;
  std::optional<std::uint64_t> seed;
  std::string tool_version = kToolVersion;
  std::vector<std::pair<std::string, double>> stage_ms;  // wall clock per stage
  std::vector<std::string> outputs;
  nlohmann::json config;  // effective configuration
};

void write_manifest(const RunManifest& manifest, const std::filesystem::path& dir);

/// Preprocess, track and mask settings read from one strict JSON object with
/// optional "preprocess", "track" and "mask" members.
struct PipelineConfig {
  PreprocessConfig preprocess;
  TrackConfig track;
  MaskConfig mask;
};

void to_json(nlohmann::json& j, const PipelineConfig& cfg);
void from_json(const nlohmann::json& j, PipelineConfig& cfg);

/// Parses a strict-schema JSON file. Parse errors carry line and column and
/// map to ConfigError; a missing file maps to FileNotFound.
[[nodiscard]] nlohmann::json read_config_file(const std::filesystem::path& path);

/// Resolves `--pattern`: a design name or a path to a pattern JSON file.
[[nodiscard]] MarkerPattern parse_pattern_arg(const std::string& arg);

struct SimulateOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::filesystem::path out;
};

struct TrackOptions {
  std::filesystem::path input;  // one sequence directory or a corpus directory
  std::optional<std::string> pattern;
  std::optional<std::filesystem::path> config;
  bool overlay = false;
  int jobs = 1;
  std::filesystem::path out;
};

struct EvalOptions {
  std::vector<std::filesystem::path> inputs;  // report files or directories
  std::optional<std::filesystem::path> truth;  // truth.json or a corpus directory
  std::filesystem::path out;
};

struct InspectOptions {
  std::filesystem::path frame;
  std::optional<std::string> pattern;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
};

/// Each command writes its outputs plus `run_manifest.json` under `out`, fills
/// `summary` with a machine-readable result, and throws Error on failure.
void cmd_simulate(const SimulateOptions& opt, nlohmann::json& summary, RunManifest& manifest);
void cmd_track(const TrackOptions& opt, nlohmann::json& summary, RunManifest& manifest);
void cmd_eval(const EvalOptions& opt, nlohmann::json& summary, RunManifest& manifest);
void cmd_inspect(const InspectOptions& opt, nlohmann::json& summary, RunManifest& manifest);

/// Entry point of the `magicskin` binary. Returns the process exit code.
[[nodiscard]] int run_cli(int argc, char** argv);
[[nodiscard]] int run_cli(const std::vector<std::string>& args);

}  // namespace magicskin::cli
