#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ars {

enum class ErrorCode {
  ParseError,
  InvalidPose,
  InvalidSize,
  InvalidCamera,
  InvalidArgument,
  DuplicateId,
  DegenerateDepth,
  NoMarkersVisible,
  InconsistentObservations,
  DegenerateEdge,
  CollinearPoints,
  InvalidPolygon,
  TooFewViews,
  EmptyHull,
  CoincidentPosition,
  NoGroundTruth,
  FrameMismatch,
  NotFound,
  RevisionConflict,
  IoError,
  UnknownFormat,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidPose: return "InvalidPose";
    case ErrorCode::InvalidSize: return "InvalidSize";
    case ErrorCode::InvalidCamera: return "InvalidCamera";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::DegenerateDepth: return "DegenerateDepth";
    case ErrorCode::NoMarkersVisible: return "NoMarkersVisible";
    case ErrorCode::InconsistentObservations: return "InconsistentObservations";
    case ErrorCode::DegenerateEdge: return "DegenerateEdge";
    case ErrorCode::CollinearPoints: return "CollinearPoints";
    case ErrorCode::InvalidPolygon: return "InvalidPolygon";
    case ErrorCode::TooFewViews: return "TooFewViews";
    case ErrorCode::EmptyHull: return "EmptyHull";
    case ErrorCode::CoincidentPosition: return "CoincidentPosition";
    case ErrorCode::NoGroundTruth: return "NoGroundTruth";
    case ErrorCode::FrameMismatch: return "FrameMismatch";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::RevisionConflict: return "RevisionConflict";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UnknownFormat: return "UnknownFormat";
  }
  return "Unknown";
}

/// Every failure raised by the toolkit. The code identifies the failure
/// class; what() carries a human readable message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ars
