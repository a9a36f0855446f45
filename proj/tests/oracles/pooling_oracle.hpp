#pragma once

// Table-style statistics recomputed from a flat list of every per-step FB error.

#include <algorithm>
#include <cmath>
#include <vector>

#include "magicskin/track.hpp"

namespace oracle {

struct FlatStats {
  double mean = 0, std = 0, min = 0, max = 0, retention = 0;
  long initial = 0, final = 0;
};

inline FlatStats flat_stats(const std::vector<magicskin::TrackReport>& reports) {
  std::vector<double> all;
  FlatStats s;
  for (const auto& r : reports) {
    for (const auto& t : r.tracks) {
      for (double e : t.fb_errors) all.push_back(e);
      if (t.birth == 0) {
        ++s.initial;
        if (!t.lost_at) ++s.final;
      }
    }
  }
  s.retention = 100.0 * static_cast<double>(s.final) / static_cast<double>(s.initial);
  if (all.empty()) return s;
  double sum = 0.0;
  for (double v : all) sum += v;
  s.mean = sum / static_cast<double>(all.size());
  double ss = 0.0;
  for (double v : all) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(all.size()));
  s.min = *std::min_element(all.begin(), all.end());
  s.max = *std::max_element(all.begin(), all.end());
  return s;
}

}  // namespace oracle
