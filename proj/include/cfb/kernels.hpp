#pragma once

#include "cfb/data.hpp"

#include <Eigen/Dense>

#include <vector>

namespace cfb {

enum class KernelKind { Sobolev2, Indicator };

//! Tensor-product reproducing kernel: one factor per covariate.
struct ReproducingKernelSpec
{
  std::vector<KernelKind> kinds;

  //! Sobolev factor for continuous columns, indicator for binary ones.
  static ReproducingKernelSpec from_columns(const std::vector<ColumnKind>& kinds);
  Eigen::Index dim() const { return static_cast<Eigen::Index>(kinds.size()); }
};

//! Reproducing kernel of the second-order Sobolev space on [0,1]:
//!   1 + k1(s)k1(t) + k2(s)k2(t) - k4(|s-t|)
//! with k_j the scaled Bernoulli polynomials.
double sobolev2_1d(double s, double t);

double tensor_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& y,
                     const ReproducingKernelSpec& spec);

Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& points, const ReproducingKernelSpec& spec);

//! Rows of `a` against rows of `b`.
Eigen::MatrixXd cross_gram(const Eigen::MatrixXd& a,
                           const Eigen::MatrixXd& b,
                           const ReproducingKernelSpec& spec);

//! M ~ P diag(D) P^T keeping the leading eigenpairs.
struct GramFactorization
{
  Eigen::MatrixXd P;
  Eigen::VectorXd D;
  Eigen::Index rank = 0;
  double tol_rel = 0.0;

  Eigen::MatrixXd reconstruct() const;
};

constexpr double kDefaultEigTolRel = 1e-10;

//! Keeps eigenpairs with eigenvalue > tol_rel * lambda_max, at most r_max of
//! them, sorted descending. r_max <= 0 means no cap.
GramFactorization truncated_eig(const Eigen::MatrixXd& M,
                                double tol_rel = kDefaultEigTolRel,
                                Eigen::Index r_max = 0);

} // namespace cfb
