#include "pp/error.hpp"

namespace pp {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::MalformedInput: return "MalformedInput";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::NegativeTP: return "NegativeTP";
    case Errc::IoFailure: return "IoFailure";
    case Errc::EmptyIntersection: return "EmptyIntersection";
    case Errc::TooSmallGrid: return "TooSmallGrid";
    case Errc::BadConfig: return "BadConfig";
    case Errc::BadWidths: return "BadWidths";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::MalformedCheckpoint: return "MalformedCheckpoint";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::EmptySample: return "EmptySample";
    case Errc::BadProb: return "BadProb";
    case Errc::BatchTooSmall: return "BatchTooSmall";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::GeometryMismatch: return "GeometryMismatch";
    case Errc::KindMismatch: return "KindMismatch";
    case Errc::BadDimensions: return "BadDimensions";
    case Errc::BadFactor: return "BadFactor";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::SeriesTooShort: return "SeriesTooShort";
    case Errc::MisalignedSeries: return "MisalignedSeries";
    case Errc::MissingInput: return "MissingInput";
  }
  return "Unknown";
}

}  // namespace pp
