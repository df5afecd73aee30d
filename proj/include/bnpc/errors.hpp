#pragma once

#include <memory>
#include <stdexcept>
#include <string>

namespace bnpc {

class Point;

/// Raised for inputs that do not belong to the space, model, or problem they are used with.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative routine stops without meeting its tolerance.
/// Carries the best iterate seen so far when one exists.
class ConvergenceError : public std::runtime_error {
 public:
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
  ConvergenceError(const std::string& what, std::shared_ptr<const Point> best)
      : std::runtime_error(what), best_(std::move(best)) {}

  [[nodiscard]] bool has_best() const { return best_ != nullptr; }
  [[nodiscard]] const Point& best() const { return *best_; }

 private:
  std::shared_ptr<const Point> best_;
};

/// A checked property failed where the theory says it must hold.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bnpc
