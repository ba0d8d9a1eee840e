#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pp {

enum class Errc {
  MalformedHeader,
  MalformedInput,
  DimensionMismatch,
  NonFiniteValue,
  NegativeTP,
  IoFailure,
  EmptyIntersection,
  TooSmallGrid,
  BadConfig,
  BadWidths,
  ShapeMismatch,
  MalformedCheckpoint,
  VersionMismatch,
  EmptySample,
  BadProb,
  BatchTooSmall,
  InsufficientData,
  NonFiniteLoss,
  GeometryMismatch,
  KindMismatch,
  BadDimensions,
  BadFactor,
  SingularSystem,
  SeriesTooShort,
  MisalignedSeries,
  MissingInput,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure in the library is reported through this type; `code()`
/// identifies the condition and `what()` carries the location detail
/// (step index, byte offset, path).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace pp
