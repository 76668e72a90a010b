#pragma once

#include <stdexcept>
#include <string>

namespace hyperid {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A transition row does not sum to one.
class RowSumError : public Error {
  public:
    using Error::Error;
};

/// A parameter lies outside its admissible interval.
class DomainError : public Error {
  public:
    using Error::Error;
};

/// Array sizes disagree with the declared design.
class DimensionError : public Error {
  public:
    using Error::Error;
};

/// A probability that must enter a logarithm is not interior.
class LogDomainError : public Error {
  public:
    using Error::Error;
};

class SingularSystem : public Error {
  public:
    using Error::Error;
};

/// The value recursion did not reach the requested tolerance.
class NoConvergence : public Error {
  public:
    NoConvergence(double last_residual, int iterations)
        : Error("fixed point did not converge after " + std::to_string(iterations) +
                " iterations (residual " + std::to_string(last_residual) + ")"),
          last_residual_(last_residual), iterations_(iterations) {}

    double last_residual() const noexcept { return last_residual_; }
    int iterations() const noexcept { return iterations_; }

  private:
    double last_residual_;
    int iterations_;
};

/// A (choice, state) cell of a panel has no observations.
class EmptyCell : public Error {
  public:
    EmptyCell(const std::string &what, int choice, int state)
        : Error("empty " + what + " cell (choice " + std::to_string(choice) + ", state " +
                std::to_string(state) + ")"),
          choice_(choice), state_(state) {}

    int choice() const noexcept { return choice_; }
    int state() const noexcept { return state_; }

  private:
    int choice_;
    int state_;
};

/// The moment condition of an exclusion restriction vanishes on the whole grid.
class DegenerateRestriction : public Error {
  public:
    using Error::Error;
};

/// Malformed or unreadable configuration.
class ConfigError : public Error {
  public:
    using Error::Error;
};

} // namespace hyperid
