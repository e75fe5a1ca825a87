#pragma once

#include <stdexcept>
#include <string>

namespace nonadiabat {

// Every failure mode the library reports carries a stable machine-readable
// code (the class name) plus a message with operation provenance.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define NONADIABAT_ERROR(Name)                                            \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& message) : Error(#Name, message) {}  \
  }

NONADIABAT_ERROR(NotHermitian);
NONADIABAT_ERROR(SingularOperand);
NONADIABAT_ERROR(DimensionMismatch);
NONADIABAT_ERROR(NotNormalized);
NONADIABAT_ERROR(NotPositive);
NONADIABAT_ERROR(OutOfHorizon);
NONADIABAT_ERROR(DegenerateSteadyState);
NONADIABAT_ERROR(NotPositiveDefinite);
NONADIABAT_ERROR(IntegratorDrift);
NONADIABAT_ERROR(NotPrivileged);
NONADIABAT_ERROR(ZeroOperator);
NONADIABAT_ERROR(UnpairedJump);
NONADIABAT_ERROR(SingularState);
NONADIABAT_ERROR(MissingWeights);
NONADIABAT_ERROR(StepTooLarge);
NONADIABAT_ERROR(DegenerateFixedPoint);
NONADIABAT_ERROR(InsufficientSamples);
NONADIABAT_ERROR(ParseError);
NONADIABAT_ERROR(SchemaVersionMismatch);
NONADIABAT_ERROR(UnresolvedReference);
NONADIABAT_ERROR(NegativeAmplitude);

#undef NONADIABAT_ERROR

}  // namespace nonadiabat
