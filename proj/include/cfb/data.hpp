#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace cfb {

enum class ColumnKind { Continuous, Binary };

//! Covariates X (N x d), treatment T in {0,1}, outcome Y, and the subset of
//! X columns (V) over which the treatment effect curve is indexed.
struct ObservationalDataset
{
  Eigen::MatrixXd X;
  Eigen::VectorXd T;
  Eigen::VectorXd Y;
  std::vector<int> v_cols;
  std::vector<ColumnKind> col_kinds;
  std::vector<std::string> col_names;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }
  Eigen::Index d1() const { return static_cast<Eigen::Index>(v_cols.size()); }

  //! N x d1 matrix of the conditioning columns.
  Eigen::MatrixXd V() const;
  Eigen::Index n_treated() const;

  //! Throws InvalidDataset / NonBinaryTreatment when an invariant is broken.
  void validate() const;
};

//! Per-column affine map onto [0,1]; binary columns pass through (nullopt).
struct ScalingMap
{
  struct Range
  {
    double min;
    double max;
  };
  std::vector<std::optional<Range>> ranges;

  double scale(Eigen::Index col, double x) const;
  double unscale(Eigen::Index col, double x) const;
};

ScalingMap fit_scaling(const ObservationalDataset& ds);
ObservationalDataset apply_scaling(const ObservationalDataset& ds,
                                   const ScalingMap& map);
ObservationalDataset unapply_scaling(const ObservationalDataset& ds,
                                     const ScalingMap& map);

struct CsvSchema
{
  std::string treatment_col;
  std::string outcome_col;
  std::vector<std::string> v_cols;
  //! Covariates in X order. V columns not listed here are prepended.
  std::vector<std::string> covariate_cols;
  //! Names of covariates to tag binary; everything else is continuous.
  std::vector<std::string> binary_cols;
};

ObservationalDataset load_csv(const std::string& path, const CsvSchema& schema);

//! Splits one CSV record on commas, honouring double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line);

} // namespace cfb
