#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace slopeflow {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed function text. Carries the byte offset of the failure and the
/// token the parser was looking for.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position, std::string expected)
      : Error(what + " at position " + std::to_string(position) +
              (expected.empty() ? std::string() : " (expected " + expected + ")")),
        position_(position),
        expected_(std::move(expected)) {}

  std::size_t position() const noexcept { return position_; }
  const std::string& expected() const noexcept { return expected_; }

 private:
  std::size_t position_;
  std::string expected_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A reparametrization met a knot where the limiting slope is below the floor.
class SlopeFloorError : public Error {
 public:
  SlopeFloorError(std::size_t knot, double slope)
      : Error("limiting slope " + std::to_string(slope) + " below floor at knot " +
              std::to_string(knot)),
        knot_(knot),
        slope_(slope) {}

  std::size_t knot() const noexcept { return knot_; }
  double slope() const noexcept { return slope_; }

 private:
  std::size_t knot_;
  double slope_;
};

class ProjectionError : public Error {
 public:
  ProjectionError(const std::string& what, double best_value)
      : Error(what), best_value_(best_value) {}

  /// Smallest function value reached by any restart.
  double best_value() const noexcept { return best_value_; }

 private:
  double best_value_;
};

class FlowError : public Error {
 public:
  using Error::Error;
};

}  // namespace slopeflow
