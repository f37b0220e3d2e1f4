#pragma once

#include <stdexcept>
#include <string>

namespace loclab {

enum class ErrorCode {
  invalid_argument,
  affine_span,
  singular_covariance,
  no_convergence,
  not_interior,
  dimension_mismatch,
  non_finite_state,
  step_size,
  hypothesis_violated,
  density_vanishing,
  construction_failed,
  config_parse,
  io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::affine_span: return "affine-span";
    case ErrorCode::singular_covariance: return "singular-covariance";
    case ErrorCode::no_convergence: return "no-convergence";
    case ErrorCode::not_interior: return "not-interior";
    case ErrorCode::dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::non_finite_state: return "non-finite-state";
    case ErrorCode::step_size: return "step-size";
    case ErrorCode::hypothesis_violated: return "hypothesis-violated";
    case ErrorCode::density_vanishing: return "density-vanishing";
    case ErrorCode::construction_failed: return "construction-failed";
    case ErrorCode::config_parse: return "config-parse";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace loclab
