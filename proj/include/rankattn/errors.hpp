#pragma once

#include <stdexcept>
#include <string>

namespace rankattn {

// Bad shapes, dimensions or parameters supplied by the caller.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InvalidDimension : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct ConfigurationError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct EmptyContextError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct DegenerateInputError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct DomainError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct TieError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ToleranceFailure : std::runtime_error {
  ToleranceFailure(const std::string& what, double bound)
      : std::runtime_error(what), error_bound(bound) {}
  double error_bound;
};

struct NonFiniteLoss : std::runtime_error {
  NonFiniteLoss(const std::string& what, long step_)
      : std::runtime_error(what), step(step_) {}
  long step;
};

}  // namespace rankattn
