#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace resq {

enum class Errc {
  unphysical_parameters,
  degenerate_trace,
  collinear_points,
  no_convergence,
  singular_covariance,
  window_too_narrow,
  too_few_points,
  no_normal_state,
  no_transition,
  empty_result,
  malformed_steps,
  no_fixed_point,
  no_resonance,
  precondition,
  parse,
  io,
  usage,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::unphysical_parameters: return "unphysical-parameters";
    case Errc::degenerate_trace: return "degenerate-trace";
    case Errc::collinear_points: return "collinear-points";
    case Errc::no_convergence: return "no-convergence";
    case Errc::singular_covariance: return "singular-covariance";
    case Errc::window_too_narrow: return "window-too-narrow";
    case Errc::too_few_points: return "too-few-points";
    case Errc::no_normal_state: return "no-normal-state";
    case Errc::no_transition: return "no-transition";
    case Errc::empty_result: return "empty-result";
    case Errc::malformed_steps: return "malformed-steps";
    case Errc::no_fixed_point: return "no-fixed-point";
    case Errc::no_resonance: return "no-resonance";
    case Errc::precondition: return "precondition";
    case Errc::parse: return "parse";
    case Errc::io: return "io";
    case Errc::usage: return "usage";
  }
  return "unknown";
}

// Process exit status for an error category: 1 usage, 2 input/parse,
// 3 fit/convergence, 4 I/O.
inline int exit_code(Errc code) {
  switch (code) {
    case Errc::usage: return 1;
    case Errc::parse:
    case Errc::precondition:
    case Errc::too_few_points:
    case Errc::malformed_steps:
      return 2;
    case Errc::io: return 4;
    default: return 3;
  }
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, std::string stage = {})
      : std::runtime_error(what), code_(code), stage_(std::move(stage)) {}

  Errc code() const noexcept { return code_; }

  /// Pipeline stage that raised the error, empty outside staged pipelines.
  const std::string& stage() const noexcept { return stage_; }

  Error with_stage(std::string stage) const {
    return Error(code_, what(), std::move(stage));
  }

 private:
  Errc code_;
  std::string stage_;
};

}  // namespace resq
