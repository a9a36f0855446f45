#include "magicskin/raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "magicskin/error.hpp"

namespace magicskin {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptImage: return "CorruptImage";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::EmptyDirectory: return "EmptyDirectory";
    case ErrorCode::NonContiguousIndices: return "NonContiguousIndices";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateResult: return "DegenerateResult";
    case ErrorCode::ZeroChannel: return "ZeroChannel";
    case ErrorCode::TileTooSmall: return "TileTooSmall";
    case ErrorCode::NoFeatures: return "NoFeatures";
    case ErrorCode::EmptyReport: return "EmptyReport";
    case ErrorCode::SequenceMismatch: return "SequenceMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

namespace {

void check_dims(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument,
                "raster dimensions must be positive, got " + std::to_string(width) + "x" +
                    std::to_string(height));
  }
}

void check_index(int index) {
  if (index < 0) throw Error(ErrorCode::InvalidArgument, "frame index must be >= 0");
}

}  // namespace

Frame::Frame(int width, int height, int index) : width_(width), height_(height), index_(index) {
  check_dims(width, height);
  check_index(index);
  data_.assign(static_cast<std::size_t>(width) * height * 3, 0);
}

Frame::Frame(int width, int height, std::vector<std::uint8_t> data, int index)
    : width_(width), height_(height), index_(index), data_(std::move(data)) {
  check_dims(width, height);
  check_index(index);
  if (data_.size() != static_cast<std::size_t>(width) * height * 3) {
    throw Error(ErrorCode::InvalidArgument, "frame data length must equal width*height*3");
  }
}

void Frame::set_index(int index) {
  check_index(index);
  index_ = index;
}

GrayFrame::GrayFrame(int width, int height, float fill, int index)
    : width_(width), height_(height), index_(index) {
  check_dims(width, height);
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayFrame::GrayFrame(int width, int height, std::vector<float> data, int index)
    : width_(width), height_(height), index_(index), data_(std::move(data)) {
  check_dims(width, height);
  if (data_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::InvalidArgument, "gray data length must equal width*height");
  }
}

void FrameSequence::validate() const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].index() != static_cast<int>(i)) {
      throw Error(ErrorCode::NonContiguousIndices,
                  "frame " + std::to_string(i) + " carries index " +
                      std::to_string(frames[i].index()));
    }
    if (frames[i].width() != frames[0].width() || frames[i].height() != frames[0].height()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "frame " + std::to_string(i) + " is " + std::to_string(frames[i].width()) +
                      "x" + std::to_string(frames[i].height()) + ", expected " +
                      std::to_string(frames[0].width()) + "x" +
                      std::to_string(frames[0].height()));
    }
  }
}

GrayFrame to_gray(const Frame& frame) {
  GrayFrame out(frame.width(), frame.height(), 0.0f, frame.index());
  const auto src = frame.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double luma =
        (0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2]) / 255.0;
    dst[i] = static_cast<float>(std::clamp(luma, 0.0, 1.0));
  }
  return out;
}

Frame gray_to_frame(const GrayFrame& gray) {
  Frame out(gray.width(), gray.height(), gray.index());
  auto dst = out.data();
  const auto src = gray.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(
        std::lround(std::clamp(static_cast<double>(src[i]), 0.0, 1.0) * 255.0));
    dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = v;
  }
  return out;
}

}  // namespace magicskin
