#pragma once

#include <stdexcept>
#include <string>

namespace stabilitylab {

// Base class for every failure this library reports. Catching Error is
// sufficient to handle any library-originated problem; subclasses exist so
// callers can map distinct failure modes to distinct exit codes.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Requested flux is outside the model's validity domain |flux| <= 0.45 Phi0.
struct FluxOutOfRange : Error {
  using Error::Error;
};

// A scan frequency lies outside the band the device can be tuned to.
struct GridUnreachable : Error {
  using Error::Error;
};

// Two maps that must share dimensions do not.
struct DimensionMismatch : Error {
  using Error::Error;
};

// A map is constant (population std below 1e-12), so it cannot be normalized.
struct DegenerateMap : Error {
  using Error::Error;
};

// Replica pairs produced a zero noise floor; alpha would be 0.
struct DegenerateCalibration : Error {
  using Error::Error;
};

// Fewer replica pairs than the calibration minimum (10).
struct InsufficientReplicas : Error {
  using Error::Error;
};

// A fit was handed fewer points (or less span) than it can determine
// parameters from.
struct InsufficientPoints : Error {
  using Error::Error;
};

// A decay summary needs intra-cycle pairs spanning at least two decades.
struct InsufficientSpan : Error {
  using Error::Error;
};

// The nonlinear fitter hit its iteration cap without meeting the gradient
// tolerance, or the data admits no decay to fit.
struct ConvergenceFailure : Error {
  using Error::Error;
};

// An exponential fit converged to t1 <= 0.
struct NonPositiveT1 : Error {
  using Error::Error;
};

// Session statistics over an empty sample.
struct EmptySession : Error {
  using Error::Error;
};

// Configuration document is missing keys, has unknown keys, or has values
// outside their allowed ranges. The message carries the offending key path.
struct ConfigError : Error {
  using Error::Error;
};

// File could not be read, written, or parsed.
struct IoError : Error {
  using Error::Error;
};

}  // namespace stabilitylab
