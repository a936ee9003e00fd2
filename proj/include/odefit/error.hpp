#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace odefit {

// Error taxonomy shared by the library and the CLI exit codes:
// validation=1, numeric=2, io=3, non_identifiable=4.
enum class ErrorKind {
  validation = 1,
  numeric = 2,
  io = 3,
  non_identifiable = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

// Raised when the Gram matrix of the integrated design is numerically
// singular. Carries the spectrum and a null-space basis so callers can
// report which parameter combination is unidentified.
class NonIdentifiableError : public Error {
 public:
  NonIdentifiableError(std::string message, std::vector<double> spectrum,
                       std::vector<std::vector<double>> null_basis)
      : Error(ErrorKind::non_identifiable, std::move(message)),
        spectrum_(std::move(spectrum)),
        null_basis_(std::move(null_basis)) {}

  const std::vector<double>& spectrum() const noexcept { return spectrum_; }
  const std::vector<std::vector<double>>& null_basis() const noexcept {
    return null_basis_;
  }

 private:
  std::vector<double> spectrum_;
  std::vector<std::vector<double>> null_basis_;
};

}  // namespace odefit
