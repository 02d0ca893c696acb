#pragma once

#include <Eigen/Dense>

namespace cfb {

constexpr int kDefaultQuadraturePoints = 201;
constexpr double kDefaultDenomFloor = 1e-12;
constexpr double kDefaultQuadratureBudget = 1e10;

//! Standard Gaussian density in d dimensions.
double gaussian_K(const Eigen::Ref<const Eigen::VectorXd>& s);

struct SmoothingOptions
{
  int quadrature_points = kDefaultQuadraturePoints;
  double denom_floor = kDefaultDenomFloor;
  //! Upper bound on nodes * N^2 work for the G_h precomputation.
  double quadrature_budget = kDefaultQuadratureBudget;
};

//! Nadaraya-Watson smoothing over the scaled conditioning values V.
//!
//! ktilde(i, v) is the kernel weight of sample i at location v divided by the
//! local average kernel weight, so (1/N) sum_i ktilde(i, v) = 1 at every v.
//! Kernel values are rescaled by the nearest sample before dividing, so the
//! floor only guards against a zero denominator. Integrals over v run on a tensor
//! uniform grid covering [0,1]^d1.
class SmoothingContext
{
public:
  SmoothingContext(Eigen::MatrixXd V, double h, SmoothingOptions options = {});

  Eigen::Index n() const { return V_.rows(); }
  Eigen::Index d1() const { return V_.cols(); }
  double h() const { return h_; }
  const Eigen::MatrixXd& V() const { return V_; }
  const SmoothingOptions& options() const { return options_; }

  double ktilde(Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& v) const;
  //! All N normalized weights at one location.
  Eigen::VectorXd ktilde_all(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  //! N x G matrix of normalized weights at the rows of `points` (G x d1).
  Eigen::MatrixXd ktilde_matrix(const Eigen::MatrixXd& points) const;

  //! Quadrature nodes (one per row) and matching weights.
  const Eigen::MatrixXd& nodes() const { return nodes_; }
  const Eigen::VectorXd& node_weights() const { return node_weights_; }

private:
  Eigen::MatrixXd V_;
  double h_;
  SmoothingOptions options_;
  Eigen::MatrixXd nodes_;
  Eigen::VectorXd node_weights_;
};

//! Tensor rule on [0,1]^dim with q uniform points per axis: trapezoid weights
//! with Gregory end corrections for q >= 8, plain trapezoid below that.
void quadrature_grid(int q, Eigen::Index dim, Eigen::MatrixXd& nodes, Eigen::VectorXd& weights);

//! G_ij = integral over [0,1]^d1 of ktilde(i, v) ktilde(j, v) dv.
//! Exactly symmetric; throws QuadratureBudgetExceeded past the work cap.
Eigen::MatrixXd compute_Gh(const SmoothingContext& ctx);

//! Reference-rule bandwidth for the conditioning variable, rescaled to the
//! N^{-2/7} undersmoothing order: 1.06 * min(sd, IQR/1.349) * N^{-2/7}.
//! For several columns the per-column rules are combined by geometric mean.
double bandwidth_default(const Eigen::MatrixXd& V);
double bandwidth_default(const Eigen::VectorXd& v, Eigen::Index n);

//! Sample quantile with linear interpolation between order statistics.
double quantile(Eigen::VectorXd values, double p);

} // namespace cfb
