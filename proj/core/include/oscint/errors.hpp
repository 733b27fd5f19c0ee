#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace oscint {

// Base of every error raised by the library. `module` and `operation` name
// the failing call site; `what()` carries the human readable witness.
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string operation, const std::string& message)
      : std::runtime_error(message), module_(std::move(module)), operation_(std::move(operation)) {}

  const std::string& module() const { return module_; }
  const std::string& operation() const { return operation_; }
  virtual const char* kind() const = 0;

 private:
  std::string module_;
  std::string operation_;
};

#define OSCINT_ERROR(Name, Module)                                                    \
  class Name : public Error {                                                         \
   public:                                                                            \
    Name(std::string operation, const std::string& message)                           \
        : Error(Module, std::move(operation), message) {}                             \
    const char* kind() const override { return #Name; }                               \
  };

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, std::vector<std::string> expected, const std::string& message)
      : Error("expr", "parse", message), position_(position), expected_(std::move(expected)) {}
  const char* kind() const override { return "SyntaxError"; }
  std::size_t position() const { return position_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  std::size_t position_;
  std::vector<std::string> expected_;
};

class DomainError : public Error {
 public:
  DomainError(std::string node, double value, const std::string& message)
      : Error("expr", "eval", message), node_(std::move(node)), value_(value) {}
  const char* kind() const override { return "DomainError"; }
  const std::string& node() const { return node_; }
  double value() const { return value_; }

 private:
  std::string node_;
  double value_;
};

OSCINT_ERROR(UnknownVariable, "expr")
OSCINT_ERROR(InvalidArgument, "expr")
OSCINT_ERROR(EvaluationFailed, "calculus")
OSCINT_ERROR(DegenerateFit, "calculus")
OSCINT_ERROR(NotASymbol, "calculus")
OSCINT_ERROR(BadRadii, "calculus")
OSCINT_ERROR(ExpressionSwell, "regularize")
OSCINT_ERROR(RegionTouchesCriticalSet, "regularize")
OSCINT_ERROR(ConeIntersectsSP, "regularize")
OSCINT_ERROR(NotConvergent, "quadrature")
OSCINT_ERROR(ToleranceNotReached, "quadrature")
OSCINT_ERROR(ConfigParse, "cli")
OSCINT_ERROR(ConfigInvalid, "cli")

#undef OSCINT_ERROR

// Raised when the nondegeneracy bound of a phase fails numerically. The witness
// is the ray (x, direction) along which eta / |theta|^(2 mu) decays.
class DegeneratePhase : public Error {
 public:
  DegeneratePhase(std::vector<double> x, std::vector<double> direction, std::vector<double> lambdas,
                  std::vector<double> ratios, const std::string& message)
      : Error("calculus", "validate_phase", message),
        x_(std::move(x)),
        direction_(std::move(direction)),
        lambdas_(std::move(lambdas)),
        ratios_(std::move(ratios)) {}
  const char* kind() const override { return "DegeneratePhase"; }
  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& direction() const { return direction_; }
  const std::vector<double>& lambdas() const { return lambdas_; }
  const std::vector<double>& ratios() const { return ratios_; }

 private:
  std::vector<double> x_, direction_, lambdas_, ratios_;
};

}  // namespace oscint
