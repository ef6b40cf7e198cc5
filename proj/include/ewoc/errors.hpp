#ifndef EWOC_ERRORS_HPP
#define EWOC_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ewoc {

/// Argument outside the domain of a model function (non-finite input, dose below x*).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Design constants that violate 0 < theta < 1 - epsilon or x_min < x_max.
class InvalidDesign : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Model parameter outside its admissible range (e.g. non-positive slope).
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Reparameterization that collapses, e.g. an MTD equal to the minimum dose.
class DegenerateModel : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Posterior with zero mass everywhere on its support.
class DegeneratePosterior : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// State transition that conflicts with the current trial state.
class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrialHalted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FieldError {
  std::string field;
  std::string message;
  bool operator==(const FieldError&) const = default;
};

/// Configuration rejected during validation; carries one entry per offending field.
class InvalidConfig : public std::invalid_argument {
 public:
  explicit InvalidConfig(std::vector<FieldError> errors)
      : std::invalid_argument(summarize(errors)), errors_(std::move(errors)) {}

  const std::vector<FieldError>& errors() const noexcept { return errors_; }

 private:
  static std::string summarize(const std::vector<FieldError>& errors) {
    std::string out = "invalid configuration";
    for (const auto& e : errors) out += "; " + e.field + ": " + e.message;
    return out;
  }

  std::vector<FieldError> errors_;
};

}  // namespace ewoc

#endif  // EWOC_ERRORS_HPP
