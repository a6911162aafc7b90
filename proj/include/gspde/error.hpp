#pragma once

#include <stdexcept>
#include <string>

namespace gspde {

enum class ErrorCode {
  // graph
  DisconnectedGraph,
  BadDegree,
  InconsistentInterval,
  NoUnboundedEdge,
  RTooSmall,
  ParseError,
  // coefficients
  InconsistentClass,
  DeltaTooLarge,
  // hamiltonian
  DegenerateHessian,
  DuplicateCriticalValue,
  InvalidHamiltonian,
  ComponentTrackingAmbiguity,
  TraceDiverged,
  WrongComponent,
  NearZeroGradient,
  // fem
  MeshTooCoarse,
  SingularMass,
  SingularSystem,
  NonCoerciveShift,
  NonNestedMeshes,
  // noise
  BoundViolated,
  AsymmetricAtoms,
  // solver / harness
  NonFinite,
  InsufficientLevels,
  InsufficientSeeds,
  GammaTooFat,
  InvalidConfig,
  PreconditionViolated,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::BadDegree: return "BadDegree";
    case ErrorCode::InconsistentInterval: return "InconsistentInterval";
    case ErrorCode::NoUnboundedEdge: return "NoUnboundedEdge";
    case ErrorCode::RTooSmall: return "RTooSmall";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InconsistentClass: return "InconsistentClass";
    case ErrorCode::DeltaTooLarge: return "DeltaTooLarge";
    case ErrorCode::DegenerateHessian: return "DegenerateHessian";
    case ErrorCode::DuplicateCriticalValue: return "DuplicateCriticalValue";
    case ErrorCode::InvalidHamiltonian: return "InvalidHamiltonian";
    case ErrorCode::ComponentTrackingAmbiguity: return "ComponentTrackingAmbiguity";
    case ErrorCode::TraceDiverged: return "TraceDiverged";
    case ErrorCode::WrongComponent: return "WrongComponent";
    case ErrorCode::NearZeroGradient: return "NearZeroGradient";
    case ErrorCode::MeshTooCoarse: return "MeshTooCoarse";
    case ErrorCode::SingularMass: return "SingularMass";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NonCoerciveShift: return "NonCoerciveShift";
    case ErrorCode::NonNestedMeshes: return "NonNestedMeshes";
    case ErrorCode::BoundViolated: return "BoundViolated";
    case ErrorCode::AsymmetricAtoms: return "AsymmetricAtoms";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InsufficientLevels: return "InsufficientLevels";
    case ErrorCode::InsufficientSeeds: return "InsufficientSeeds";
    case ErrorCode::GammaTooFat: return "GammaTooFat";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
  }
  return "Unknown";
}

/// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gspde
