#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace magicskin {

/// Sub-pixel position or displacement, in px.
struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Interleaved 8-bit RGB frame. Only used at I/O boundaries; all processing
/// happens on float planes.
class Frame {
 public:
  Frame() = default;
  Frame(int width, int height, int index = 0);
  Frame(int width, int height, std::vector<std::uint8_t> data, int index = 0);

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] int index() const noexcept { return index_; }
  void set_index(int index);
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] std::span<const std::uint8_t> data() const noexcept { return data_; }
  [[nodiscard]] std::span<std::uint8_t> data() noexcept { return data_; }

  [[nodiscard]] std::uint8_t at(int x, int y, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }
  std::uint8_t& at(int x, int y, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int index_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Single-channel float raster. Samples are expected in [0,1] for frames that
/// flow through the pipeline; intermediate planes may hold other ranges.
class GrayFrame {
 public:
  GrayFrame() = default;
  GrayFrame(int width, int height, float fill = 0.0f, int index = 0);
  GrayFrame(int width, int height, std::vector<float> data, int index = 0);

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] int index() const noexcept { return index_; }
  void set_index(int index) noexcept { index_ = index; }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

  [[nodiscard]] std::span<const float> data() const noexcept { return data_; }
  [[nodiscard]] std::span<float> data() noexcept { return data_; }
  [[nodiscard]] const float* row(int y) const noexcept {
    return data_.data() + static_cast<std::size_t>(y) * width_;
  }
  float* row(int y) noexcept { return data_.data() + static_cast<std::size_t>(y) * width_; }

  [[nodiscard]] float at(int x, int y) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  float& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  friend bool operator==(const GrayFrame&, const GrayFrame&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int index_ = 0;
  std::vector<float> data_;
};

struct FrameSequence {
  std::vector<Frame> frames;
  double fps = 40.0;

  /// Throws DimensionMismatch / NonContiguousIndices when the invariants fail.
  void validate() const;
};

/// BT.601 luma scaled to [0,1].
[[nodiscard]] GrayFrame to_gray(const Frame& frame);

/// Quantizes a [0,1] plane to an 8-bit gray RGB frame (values clamped, rounded).
[[nodiscard]] Frame gray_to_frame(const GrayFrame& gray);

}  // namespace magicskin
