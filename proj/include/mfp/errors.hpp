#ifndef MFP_ERRORS_HPP
#define MFP_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfp {

// Caller passed arguments violating a documented precondition.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A user-supplied coefficient returned a non-finite value.
struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Requested operation needs structure the model does not declare
// (e.g. the conditional-law recursion needs an affine drift).
struct UnsupportedModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Forward simulation produced a non-finite state.
struct BlowUpError : std::runtime_error {
  std::size_t step;
  std::size_t particle;
  BlowUpError(std::size_t step_, std::size_t particle_, const std::string& what_)
      : std::runtime_error(what_), step(step_), particle(particle_) {}
};

// Riccati backward integration left the stable regime before t = 0.
struct HorizonError : std::runtime_error {
  double blow_up_time;
  HorizonError(double t, const std::string& what_) : std::runtime_error(what_), blow_up_time(t) {}
};

// Normal equations of a least-squares step are numerically rank deficient.
struct BasisDegeneracyError : std::runtime_error {
  std::size_t step;
  BasisDegeneracyError(std::size_t step_, const std::string& what_)
      : std::runtime_error(what_), step(step_) {}
};

// sigma * sigma^T singular at a probe point.
struct InvertibilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Config field failed validation; `pointer` is a JSON pointer to the field.
struct ConfigError : std::runtime_error {
  std::string pointer;
  ConfigError(std::string pointer_, const std::string& what_)
      : std::runtime_error(what_), pointer(std::move(pointer_)) {}
};

// Fewer than three usable points for a log-log fit.
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mfp

#endif  // MFP_ERRORS_HPP
