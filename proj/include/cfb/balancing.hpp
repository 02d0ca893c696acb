#pragma once

#include "cfb/data.hpp"
#include "cfb/kernels.hpp"
#include "cfb/smoothing.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace cfb {

enum class Arm { Treated, Control };

//! Constant in front of the log N / N order of the weight-variability penalty.
constexpr double kLambda2Scale = 0.01;

//! 1 for the samples whose weights are being estimated, 0 otherwise.
Eigen::VectorXd arm_indicator(const Eigen::VectorXd& T, Arm arm);

struct BalancingConfig
{
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  Arm arm = Arm::Treated;
  int max_iters = 2000;
  double step0 = 1.0;
  double tol_obj = 1e-6;
  double eig_tie_tol = 1e-8;
  //! Window (iterations) over which the best objective must stall.
  int patience = 50;

  //! lambda1 = log N / (N h^d1), lambda2 = kLambda2Scale * log N / N.
  static BalancingConfig defaults(Eigen::Index n, double h, Eigen::Index d1, Arm arm);
  //! Defaults for the all-ones (marginal) Gram matrix: the smoothing window
  //! covers the whole unit domain, so h^d1 is replaced by 1.
  static BalancingConfig marginal_defaults(Eigen::Index n, Arm arm);
  void validate() const;
};

struct BalanceWeights
{
  Eigen::VectorXd w;
  std::vector<double> objective_trace;
  double objective = 0.0;
  double final_eigengap = 0.0;
  int iterations = 0;
  int tie_iterations = 0;
  bool converged = false;
};

struct SpectralPoint
{
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  Eigen::VectorXd beta;
  double gap() const { return sigma1 - sigma2; }
};

//! Finite-dimensional form of the weight problem for one arm:
//!
//!   F(w) = sigma_max(B(w)) + lambda2 * (1/N) sum_active w_i^2 G_ii
//!   B(w) = (1/N) P^T diag(y) G diag(y) P - N lambda1 diag(D)^{-1}
//!   y    = a o w - 1,  a = arm indicator
//!
//! G is stored through a PSD factor F F^T (eigenvalues below 1e-14 of the
//! largest dropped) so B is assembled in O(N k r) with k = rank(G).
class BalancingProblem
{
public:
  BalancingProblem(const GramFactorization& gram,
                   const Eigen::MatrixXd& G,
                   const Eigen::VectorXd& T,
                   Arm arm,
                   double lambda1,
                   double lambda2);

  Eigen::Index n() const { return active_.size(); }
  Eigen::Index rank() const { return P_.cols(); }
  const Eigen::VectorXd& active() const { return active_; }
  const Eigen::VectorXd& G_diag() const { return G_diag_; }

  Eigen::VectorXd y(const Eigen::VectorXd& w) const;
  Eigen::MatrixXd B(const Eigen::VectorXd& w) const;
  SpectralPoint spectrum(const Eigen::VectorXd& w) const;

  double penalty_R(const Eigen::VectorXd& w) const;
  double objective(const Eigen::VectorXd& w) const;
  Eigen::VectorXd subgradient(const Eigen::VectorXd& w) const;
  //! Objective and subgradient from a single eigensolve.
  double evaluate(const Eigen::VectorXd& w, Eigen::VectorXd& grad, SpectralPoint& spec) const;

  //! Clamps active entries at 1 and pins inactive entries to 1.
  void project(Eigen::VectorXd& w) const;
  bool feasible(const Eigen::VectorXd& w) const;

private:
  Eigen::MatrixXd P_;
  Eigen::VectorXd penalty_diag_; // N lambda1 / D
  Eigen::MatrixXd F_;            // G = F F^T
  Eigen::VectorXd G_diag_;
  Eigen::VectorXd active_;
  double lambda2_;
};

//! The h -> infinity limit of G_h: every entry one. Using it in place of G_h
//! gives the marginal (ATE-style) RKHS balancing criterion.
Eigen::MatrixXd marginal_gram(Eigen::Index n);

//! Projected subgradient descent from w = 1 with step0/sqrt(k) step lengths
//! along the normalized subgradient. Returns the best iterate seen.
BalanceWeights solve_weights(const BalancingProblem& problem, const BalancingConfig& config);

//! Convenience overload building the problem from its parts.
BalanceWeights solve_weights(const ObservationalDataset& ds,
                             const GramFactorization& gram,
                             const Eigen::MatrixXd& G,
                             const BalancingConfig& config);

//! Balancing error S(w, u) for u = sum_j c_j kappa(X_j, .), where
//! `u_values` holds u(X_i). The quadrature path integrates the squared
//! residual moment function node by node; the matrix path uses
//! (1/N^2) a^T G_h a with a_i = (a_i w_i - 1) u(X_i).
double balancing_error_S_quadrature(const Eigen::VectorXd& w,
                                    const Eigen::VectorXd& u_values,
                                    const Eigen::VectorXd& active,
                                    const SmoothingContext& ctx);
double balancing_error_S_matrix(const Eigen::VectorXd& w,
                                const Eigen::VectorXd& u_values,
                                const Eigen::VectorXd& active,
                                const Eigen::MatrixXd& G);

struct InnerSupReport
{
  double sigma1 = 0.0;
  double max_sampled = 0.0;
  double eigvec_value = 0.0;
  int n_samples = 0;
  bool bound_holds = false;
  bool attained = false;
};

//! Samples random unit directions beta and checks beta^T B beta <= sigma_1
//! (the finite-dimensional inner supremum) and that the leading eigenvector
//! attains it.
InnerSupReport verify_inner_sup(const Eigen::MatrixXd& B, int n_samples, std::uint64_t seed);
InnerSupReport verify_inner_sup(const Eigen::VectorXd& w,
                                const BalancingProblem& problem,
                                int n_samples,
                                std::uint64_t seed);

} // namespace cfb
