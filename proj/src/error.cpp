#include "cfb/error.hpp"

namespace cfb {

std::string_view to_string(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorKind::MissingValue: return "MissingValue";
    case ErrorKind::ConstantColumn: return "ConstantColumn";
    case ErrorKind::InvalidDataset: return "InvalidDataset";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EigFailure: return "EigFailure";
    case ErrorKind::AllEigenvaluesTruncated: return "AllEigenvaluesTruncated";
    case ErrorKind::QuadratureBudgetExceeded: return "QuadratureBudgetExceeded";
    case ErrorKind::DegenerateSpread: return "DegenerateSpread";
    case ErrorKind::SeparationDetected: return "SeparationDetected";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::SolveFailure: return "SolveFailure";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

bool Error::is_usage_error() const noexcept
{
  switch (kind_) {
    case ErrorKind::MissingColumn:
    case ErrorKind::NonBinaryTreatment:
    case ErrorKind::MissingValue:
    case ErrorKind::ConstantColumn:
    case ErrorKind::InvalidDataset:
    case ErrorKind::InvalidConfig:
    case ErrorKind::IoError:
      return true;
    default:
      return false;
  }
}

} // namespace cfb
