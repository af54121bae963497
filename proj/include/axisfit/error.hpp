#pragma once

#include <stdexcept>
#include <string>

namespace axisfit {

enum class ErrorKind {
  domain,            // angle outside its parametrization domain
  degenerate,        // gimbal lock, singular geometry
  ill_conditioned,   // normal matrix numerically singular
  parse,             // malformed input text
  validation,        // input parsed but violates an invariant
  too_few_frames,
  convergence,
  usage,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Carries the condition number of the offending normal matrix.
class IllConditionedError : public Error {
 public:
  IllConditionedError(const std::string& what, double condition_number)
      : Error(ErrorKind::ill_conditioned, what), condition_number_(condition_number) {}
  double condition_number() const noexcept { return condition_number_; }

 private:
  double condition_number_;
};

}  // namespace axisfit
