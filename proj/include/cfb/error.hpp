#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cfb {

enum class ErrorKind {
  MissingColumn,
  NonBinaryTreatment,
  MissingValue,
  ConstantColumn,
  InvalidDataset,
  DomainError,
  DimensionMismatch,
  EigFailure,
  AllEigenvaluesTruncated,
  QuadratureBudgetExceeded,
  DegenerateSpread,
  SeparationDetected,
  RankDeficient,
  SolveFailure,
  InvalidConfig,
  IoError,
};

std::string_view to_string(ErrorKind kind);

//! Single exception type for the library; `kind()` tells callers which
//! failure occurred without string matching.
class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what)
    , kind_(kind)
  {
  }

  ErrorKind kind() const noexcept { return kind_; }

  //! True for errors caused by the user's input schema or configuration
  //! rather than by a numerical failure at runtime.
  bool is_usage_error() const noexcept;

private:
  ErrorKind kind_;
};

} // namespace cfb
