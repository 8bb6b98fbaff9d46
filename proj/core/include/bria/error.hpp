#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bria {

enum class ErrorCode {
  MissingMetadata,
  ChannelMissing,
  DimensionMismatch,
  CenterOutsideFov,
  PlacementOverflow,
  BadParams,
  DegenerateInput,
  EmptyMask,
  DegenerateMask,
  ShapeMismatch,
  NotNormalizable,
  CoverageGap,
  SingleClass,
  NonConvergence,
  SchemaMismatch,
  UnknownFeatureName,
  IoFailure,
  UnknownSlide,
  UnknownCandidate,
  BadDecision,
  ParseError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every recoverable failure in the library is reported as a bria::Error
/// carrying a machine-checkable code.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace bria
