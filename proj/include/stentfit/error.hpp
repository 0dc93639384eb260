#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stentfit {

enum class ErrorCode {
  MalformedHeader,
  SizeMismatch,
  IoFailure,
  InvalidSpec,
  GeometryOverflow,
  DegenerateContrast,
  OutOfBounds,
  SeedOutsideWindow,
  EmptyMask,
  NoBifurcation,
  ExtraBranches,
  CenterlineTooShort,
  RadiusNonPositive,
  InvalidGrid,
  InvalidConnection,
  SingularSystem,
  NonFiniteState,
  LandmarkOutOfRange,
  RegionEmpty,
  InvalidConfig,
  PortBusy,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::GeometryOverflow: return "GeometryOverflow";
    case ErrorCode::DegenerateContrast: return "DegenerateContrast";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::SeedOutsideWindow: return "SeedOutsideWindow";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::NoBifurcation: return "NoBifurcation";
    case ErrorCode::ExtraBranches: return "ExtraBranches";
    case ErrorCode::CenterlineTooShort: return "CenterlineTooShort";
    case ErrorCode::RadiusNonPositive: return "RadiusNonPositive";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::InvalidConnection: return "InvalidConnection";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::LandmarkOutOfRange: return "LandmarkOutOfRange";
    case ErrorCode::RegionEmpty: return "RegionEmpty";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::PortBusy: return "PortBusy";
  }
  return "Unknown";
}

/// Domain error carrying a stable code name. what() reads "<Code>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return to_string(code_); }

 private:
  ErrorCode code_;
};

}  // namespace stentfit
