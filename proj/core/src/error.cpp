#include "bria/error.hpp"

namespace bria {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingMetadata: return "MissingMetadata";
    case ErrorCode::ChannelMissing: return "ChannelMissing";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::CenterOutsideFov: return "CenterOutsideFov";
    case ErrorCode::PlacementOverflow: return "PlacementOverflow";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::DegenerateMask: return "DegenerateMask";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotNormalizable: return "NotNormalizable";
    case ErrorCode::CoverageGap: return "CoverageGap";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::UnknownFeatureName: return "UnknownFeatureName";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::UnknownSlide: return "UnknownSlide";
    case ErrorCode::UnknownCandidate: return "UnknownCandidate";
    case ErrorCode::BadDecision: return "BadDecision";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace bria
