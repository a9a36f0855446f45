#pragma once

// Seeded synthetic track reports for metric tests.

#include <cstdint>
#include <random>

#include "magicskin/track.hpp"

namespace oracle {

inline magicskin::TrackReport random_report(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> frames_d(2, 30), tracks_d(1, 40);
  std::exponential_distribution<double> err(40.0);
  std::bernoulli_distribution lose(0.3), late(0.1);
  magicskin::TrackReport r;
  const int frames = frames_d(rng);
  r.per_frame.resize(frames);
  for (int f = 0; f < frames; ++f) r.per_frame[f].frame = f;
  const int n = tracks_d(rng);
  for (int i = 0; i < n; ++i) {
    magicskin::TrackState t;
    t.id = i;
    t.birth = (i > 0 && late(rng)) ? frames - 1 : 0;
    int end = frames;
    if (lose(rng)) {
      std::uniform_int_distribution<int> at(t.birth + 1, frames);
      const int l = at(rng);
      if (l < frames) {
        t.lost_at = l;
        t.alive = false;
        end = l;
      }
    }
    for (int f = t.birth; f < end; ++f) {
      t.positions.push_back({static_cast<double>(i), static_cast<double>(f)});
      if (f > t.birth) t.fb_errors.push_back(err(rng));
    }
    r.tracks.push_back(std::move(t));
  }
  return r;
}

}  // namespace oracle
