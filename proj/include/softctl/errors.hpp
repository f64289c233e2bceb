#pragma once

#include <stdexcept>
#include <string>

namespace softctl {

/// The MDP violates a structural invariant (shape, stochasticity, finiteness).
class InvalidMdpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exhaustive enumeration would exceed the configured trajectory budget.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// An iterative procedure produced non-finite values or failed to converge.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reading or writing an artifact failed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// KL(q || p) requested where q puts mass outside the support of p.
class AbsoluteContinuityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace softctl
