#include "cfb/balancing.hpp"

#include "cfb/error.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace cfb {

namespace {

// Relative cutoff for the PSD factor of G.
constexpr double kGramFactorTol = 1e-14;

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& G)
{
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::EigFailure, "eigensolver failed on the smoothing Gram matrix");
  }
  const auto n = G.rows();
  const double top = std::max(es.eigenvalues()(n - 1), 0.0);
  Eigen::Index keep = 0;
  while (keep < n && es.eigenvalues()(n - 1 - keep) > kGramFactorTol * top) ++keep;
  Eigen::MatrixXd F(n, keep);
  for (Eigen::Index k = 0; k < keep; ++k) {
    F.col(k) = es.eigenvectors().col(n - 1 - k) * std::sqrt(es.eigenvalues()(n - 1 - k));
  }
  return F;
}

} // namespace

Eigen::VectorXd arm_indicator(const Eigen::VectorXd& T, Arm arm)
{
  return arm == Arm::Treated ? T : Eigen::VectorXd((1.0 - T.array()).matrix());
}

BalancingConfig BalancingConfig::defaults(Eigen::Index n, double h, Eigen::Index d1, Arm arm)
{
  BalancingConfig c;
  const auto nd = static_cast<double>(n);
  c.lambda1 = std::log(nd) / (nd * std::pow(h, static_cast<double>(d1)));
  c.lambda2 = kLambda2Scale * std::log(nd) / nd;
  c.arm = arm;
  return c;
}

BalancingConfig BalancingConfig::marginal_defaults(Eigen::Index n, Arm arm)
{
  return defaults(n, 1.0, 0, arm);
}

void BalancingConfig::validate() const
{
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "lambda1 and lambda2 must be positive");
  }
  if (max_iters < 1 || patience < 1) {
    throw Error(ErrorKind::InvalidConfig, "max_iters and patience must be at least 1");
  }
  if (!(step0 > 0.0) || !(tol_obj > 0.0) || !(eig_tie_tol > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "step0, tol_obj and eig_tie_tol must be positive");
  }
}

BalancingProblem::BalancingProblem(const GramFactorization& gram,
                                   const Eigen::MatrixXd& G,
                                   const Eigen::VectorXd& T,
                                   Arm arm,
                                   double lambda1,
                                   double lambda2)
  : P_(gram.P)
  , active_(arm_indicator(T, arm))
  , lambda2_(lambda2)
{
  const auto n = T.size();
  if (P_.rows() != n || G.rows() != n || G.cols() != n) {
    throw Error(ErrorKind::DimensionMismatch, "Gram factor, G and T disagree on N");
  }
  if (gram.D.size() != P_.cols() || P_.cols() < 1) {
    throw Error(ErrorKind::DimensionMismatch, "Gram factorization is empty or inconsistent");
  }
  if (active_.sum() < 1.0) {
    throw Error(ErrorKind::InvalidDataset, "the requested arm has no samples");
  }
  penalty_diag_ = static_cast<double>(n) * lambda1 * gram.D.cwiseInverse();
  F_ = psd_factor(G);
  G_diag_ = G.diagonal();
}

Eigen::VectorXd BalancingProblem::y(const Eigen::VectorXd& w) const
{
  return (active_.array() * w.array() - 1.0).matrix();
}

Eigen::MatrixXd BalancingProblem::B(const Eigen::VectorXd& w) const
{
  const auto r = rank();
  const Eigen::MatrixXd H = F_.transpose() * (y(w).asDiagonal() * P_);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(r, r);
  out.selfadjointView<Eigen::Lower>().rankUpdate(H.transpose(), 1.0 / static_cast<double>(n()));
  out.diagonal() -= penalty_diag_;
  out.triangularView<Eigen::StrictlyUpper>() = out.transpose();
  return out;
}

SpectralPoint BalancingProblem::spectrum(const Eigen::VectorXd& w) const
{
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B(w));
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::EigFailure, "eigensolver failed on the inner problem matrix");
  }
  const auto r = rank();
  SpectralPoint sp;
  sp.sigma1 = es.eigenvalues()(r - 1);
  sp.sigma2 = r > 1 ? es.eigenvalues()(r - 2) : -std::numeric_limits<double>::infinity();
  sp.beta = es.eigenvectors().col(r - 1);
  return sp;
}

double BalancingProblem::penalty_R(const Eigen::VectorXd& w) const
{
  return (active_.array() * w.array().square() * G_diag_.array()).sum() /
         static_cast<double>(n());
}

double BalancingProblem::objective(const Eigen::VectorXd& w) const
{
  return spectrum(w).sigma1 + lambda2_ * penalty_R(w);
}

double BalancingProblem::evaluate(const Eigen::VectorXd& w,
                                  Eigen::VectorXd& grad,
                                  SpectralPoint& spec) const
{
  spec = spectrum(w);
  const double nd = static_cast<double>(n());
  const Eigen::VectorXd q = P_ * spec.beta;
  const Eigen::VectorXd yq = y(w).cwiseProduct(q);
  const Eigen::VectorXd Gyq = F_ * (F_.transpose() * yq);
  grad = (active_.array() *
          ((2.0 / nd) * q.array() * Gyq.array() + lambda2_ * (2.0 / nd) * w.array() * G_diag_.array()))
           .matrix();
  return spec.sigma1 + lambda2_ * penalty_R(w);
}

Eigen::VectorXd BalancingProblem::subgradient(const Eigen::VectorXd& w) const
{
  Eigen::VectorXd g;
  SpectralPoint sp;
  evaluate(w, g, sp);
  return g;
}

void BalancingProblem::project(Eigen::VectorXd& w) const
{
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w(i) = active_(i) > 0.5 ? std::max(w(i), 1.0) : 1.0;
  }
}

bool BalancingProblem::feasible(const Eigen::VectorXd& w) const
{
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (active_(i) > 0.5 && !(w(i) >= 1.0)) return false;
  }
  return true;
}

Eigen::MatrixXd marginal_gram(Eigen::Index n)
{
  return Eigen::MatrixXd::Ones(n, n);
}

BalanceWeights solve_weights(const BalancingProblem& problem, const BalancingConfig& config)
{
  config.validate();
  const auto n = problem.n();

  BalanceWeights out;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd grad;
  SpectralPoint spec;

  double value = problem.evaluate(w, grad, spec);
  out.w = w;
  out.objective = value;
  out.final_eigengap = spec.gap();
  out.objective_trace.reserve(static_cast<std::size_t>(config.max_iters) + 1);
  out.objective_trace.push_back(value);

  // best_history[k] = best objective after k steps.
  std::vector<double> best_history{value};

  for (int k = 1; k <= config.max_iters; ++k) {
    if (spec.gap() < config.eig_tie_tol * std::abs(spec.sigma1)) ++out.tie_iterations;

    const double gnorm = grad.norm();
    out.iterations = k;
    if (!(gnorm > 0.0)) {
      out.converged = true;
      break;
    }
    w -= (config.step0 / std::sqrt(static_cast<double>(k)) / gnorm) * grad;
    problem.project(w);

    value = problem.evaluate(w, grad, spec);
    out.objective_trace.push_back(value);
    if (value < out.objective) {
      out.objective = value;
      out.w = w;
      out.final_eigengap = spec.gap();
    }
    best_history.push_back(out.objective);

    if (k >= config.patience) {
      const double anchor = best_history[static_cast<std::size_t>(k - config.patience)];
      if (anchor - out.objective < config.tol_obj * std::abs(out.objective)) {
        out.converged = true;
        break;
      }
    }
  }
  return out;
}

BalanceWeights solve_weights(const ObservationalDataset& ds,
                             const GramFactorization& gram,
                             const Eigen::MatrixXd& G,
                             const BalancingConfig& config)
{
  const BalancingProblem problem(gram, G, ds.T, config.arm, config.lambda1, config.lambda2);
  return solve_weights(problem, config);
}

namespace {

Eigen::VectorXd residual_coefficients(const Eigen::VectorXd& w,
                                      const Eigen::VectorXd& u_values,
                                      const Eigen::VectorXd& active)
{
  return ((active.array() * w.array() - 1.0) * u_values.array()).matrix();
}

} // namespace

double balancing_error_S_quadrature(const Eigen::VectorXd& w,
                                    const Eigen::VectorXd& u_values,
                                    const Eigen::VectorXd& active,
                                    const SmoothingContext& ctx)
{
  const Eigen::VectorXd a = residual_coefficients(w, u_values, active);
  const double nd = static_cast<double>(ctx.n());
  double total = 0.0;
  for (Eigen::Index q = 0; q < ctx.nodes().rows(); ++q) {
    const double moment = a.dot(ctx.ktilde_all(ctx.nodes().row(q).transpose())) / nd;
    total += ctx.node_weights()(q) * moment * moment;
  }
  return total;
}

double balancing_error_S_matrix(const Eigen::VectorXd& w,
                                const Eigen::VectorXd& u_values,
                                const Eigen::VectorXd& active,
                                const Eigen::MatrixXd& G)
{
  const Eigen::VectorXd a = residual_coefficients(w, u_values, active);
  const double nd = static_cast<double>(G.rows());
  return a.dot(G * a) / (nd * nd);
}

InnerSupReport verify_inner_sup(const Eigen::MatrixXd& B, int n_samples, std::uint64_t seed)
{
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorKind::EigFailure, "eigensolver failed in inner-sup check");
  }
  const auto r = B.rows();
  InnerSupReport rep;
  rep.n_samples = n_samples;
  rep.sigma1 = es.eigenvalues()(r - 1);
  const Eigen::VectorXd lead = es.eigenvectors().col(r - 1);
  rep.eigvec_value = lead.dot(B * lead);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  rep.max_sampled = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd beta(r);
  for (int s = 0; s < n_samples; ++s) {
    for (Eigen::Index k = 0; k < r; ++k) beta(k) = normal(rng);
    beta.normalize();
    rep.max_sampled = std::max(rep.max_sampled, beta.dot(B * beta));
  }
  const double tol = 1e-10 * std::max(1.0, std::abs(rep.sigma1));
  rep.bound_holds = rep.max_sampled <= rep.sigma1 + tol;
  rep.attained = std::abs(rep.eigvec_value - rep.sigma1) <= tol;
  return rep;
}

InnerSupReport verify_inner_sup(const Eigen::VectorXd& w,
                                const BalancingProblem& problem,
                                int n_samples,
                                std::uint64_t seed)
{
  return verify_inner_sup(problem.B(w), n_samples, seed);
}

} // namespace cfb
