#pragma once

// Content hash of an output tree. Run manifests and per-frame wall-clock
// timings are excluded because they measure the machine, not the result.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace oracle {

inline std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string canonical_content(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string bytes = ss.str();
  if (p.filename() == "report.json") {
    auto j = nlohmann::json::parse(bytes);
    if (j.contains("per_frame"))
      for (auto& f : j["per_frame"]) f["time_ms"] = 0.0;
    bytes = j.dump();
  }
  return bytes;
}

/// Relative path -> content hash for every file under `root`.
inline std::map<std::string, std::uint64_t> tree_hashes(const std::filesystem::path& root) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "run_manifest.json") continue;
    out[std::filesystem::relative(e.path(), root).generic_string()] = fnv1a(canonical_content(e.path()));
  }
  return out;
}

inline std::uint64_t tree_hash(const std::filesystem::path& root) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [path, content] : tree_hashes(root)) {
    h = fnv1a(path, h);
    h = fnv1a(std::to_string(content), h);
  }
  return h;
}

}  // namespace oracle
