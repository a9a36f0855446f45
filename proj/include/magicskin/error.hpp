#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace magicskin {

enum class ErrorCode {
  FileNotFound,
  UnsupportedFormat,
  CorruptImage,
  IoError,
  EmptyDirectory,
  NonContiguousIndices,
  DimensionMismatch,
  InvalidArgument,
  DegenerateResult,
  ZeroChannel,
  TileTooSmall,
  NoFeatures,
  EmptyReport,
  SequenceMismatch,
  ConfigError,
};

[[nodiscard]] std::string_view to_string(ErrorCode code) noexcept;

/// Library-wide exception. `stage()` names the pipeline stage that raised it
/// when the error crossed a stage boundary (empty otherwise).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string stage = {})
      : std::runtime_error(message), code_(code), stage_(std::move(stage)) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }
  [[nodiscard]] const std::string& stage() const noexcept { return stage_; }

 private:
  ErrorCode code_;
  std::string stage_;
};

}  // namespace magicskin
