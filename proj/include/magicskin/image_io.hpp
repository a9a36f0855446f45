#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "magicskin/raster.hpp"

namespace magicskin {

/// Contents of `sequence.json` written next to every frame directory.
struct SequenceManifest {
  double fps = 40.0;
  int frame_count = 0;
  int width = 0;
  int height = 0;

  friend bool operator==(const SequenceManifest&, const SequenceManifest&) = default;
};

/// Decodes an 8-bit PNG (gray, RGB, RGBA or palette) or a binary P6 PPM with
/// maxval 255. 16-bit data is rejected with UnsupportedFormat.
[[nodiscard]] Frame load_frame(const std::filesystem::path& path);

/// Writes PPM (P6) or PNG depending on the extension. PNG output uses a fast
/// zlib level; both formats are lossless.
void save_frame(const Frame& frame, const std::filesystem::path& path);

/// Loads `frame_%06d.(ppm|png)` files from `dir`. If a `sequence.json` is
/// present its fps is used and its frame count/dimensions are checked.
[[nodiscard]] FrameSequence load_sequence(const std::filesystem::path& dir);

/// Writes frames as `frame_%06d.<ext>` plus `sequence.json`.
void save_sequence(const FrameSequence& seq, const std::filesystem::path& dir,
                   const std::string& ext = "png");

[[nodiscard]] SequenceManifest read_sequence_manifest(const std::filesystem::path& path);
void write_sequence_manifest(const SequenceManifest& manifest, const std::filesystem::path& path);

[[nodiscard]] std::string frame_filename(int index, const std::string& ext);

/// Binary PGM (P5); `bits` is row-major, nonzero written as 255.
void save_pgm(std::span<const std::uint8_t> bits, int width, int height,
              const std::filesystem::path& path);

}  // namespace magicskin
