#pragma once

#include <stdexcept>
#include <string>

namespace voldiff {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// model
struct EllipticityViolation : Error { using Error::Error; };
struct NormViolation : Error { using Error::Error; };
struct QuadratureFailure : Error { using Error::Error; };

// simulate
struct InvalidStep : Error { using Error::Error; };
struct StepMismatch : Error { using Error::Error; };
struct ConditioningExhausted : Error { using Error::Error; };

// basis_forms
struct TooFewObservations : Error { using Error::Error; };

// eigensolve
struct NotPositiveDefinite : Error { using Error::Error; };
struct NoConvergence : Error { using Error::Error; };
struct DegenerateSpectrum : Error { using Error::Error; };

// estimators / bench
struct AllMasked : Error { using Error::Error; };
struct DegenerateDesign : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

} // namespace voldiff
