#include "cfb/kernels.hpp"

#include "cfb/error.hpp"

#include <cmath>

namespace cfb {

namespace {

constexpr double kDomainSlack = 1e-9;

inline double k1(double x) { return x - 0.5; }

inline double k2(double x)
{
  const double a = k1(x);
  return (a * a - 1.0 / 12.0) / 2.0;
}

inline double k4(double x)
{
  const double a2 = k1(x) * k1(x);
  return (a2 * a2 - a2 / 2.0 + 7.0 / 240.0) / 24.0;
}

void check_unit(double x)
{
  if (!(x >= -kDomainSlack && x <= 1.0 + kDomainSlack)) {
    throw Error(ErrorKind::DomainError,
                "Sobolev kernel argument " + std::to_string(x) + " outside [0,1]");
  }
}

} // namespace

ReproducingKernelSpec ReproducingKernelSpec::from_columns(const std::vector<ColumnKind>& kinds)
{
  ReproducingKernelSpec spec;
  spec.kinds.reserve(kinds.size());
  for (auto k : kinds) {
    spec.kinds.push_back(k == ColumnKind::Binary ? KernelKind::Indicator : KernelKind::Sobolev2);
  }
  return spec;
}

double sobolev2_1d(double s, double t)
{
  check_unit(s);
  check_unit(t);
  return 1.0 + k1(s) * k1(t) + k2(s) * k2(t) - k4(std::abs(s - t));
}

double tensor_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& y,
                     const ReproducingKernelSpec& spec)
{
  if (x.size() != spec.dim() || y.size() != spec.dim()) {
    throw Error(ErrorKind::DimensionMismatch,
                "kernel spec has " + std::to_string(spec.dim()) + " dimensions, got " +
                  std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  double value = 1.0;
  for (Eigen::Index k = 0; k < spec.dim(); ++k) {
    if (spec.kinds[k] == KernelKind::Indicator) {
      if (x(k) != y(k)) return 0.0;
    } else {
      value *= sobolev2_1d(x(k), y(k));
    }
  }
  return value;
}

Eigen::MatrixXd cross_gram(const Eigen::MatrixXd& a,
                           const Eigen::MatrixXd& b,
                           const ReproducingKernelSpec& spec)
{
  if (a.cols() != spec.dim() || b.cols() != spec.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "point dimension does not match kernel spec");
  }
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    const Eigen::VectorXd bj = b.row(j).transpose();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out(i, j) = tensor_kernel(a.row(i).transpose(), bj, spec);
    }
  }
  return out;
}

Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& points, const ReproducingKernelSpec& spec)
{
  if (points.cols() != spec.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "point dimension does not match kernel spec");
  }
  const auto n = points.rows();
  Eigen::MatrixXd M(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::VectorXd xj = points.row(j).transpose();
    for (Eigen::Index i = j; i < n; ++i) {
      M(i, j) = tensor_kernel(points.row(i).transpose(), xj, spec);
      M(j, i) = M(i, j);
    }
  }
  return M;
}

Eigen::MatrixXd GramFactorization::reconstruct() const
{
  return P * D.asDiagonal() * P.transpose();
}

GramFactorization truncated_eig(const Eigen::MatrixXd& M, double tol_rel, Eigen::Index r_max)
{
  if (M.rows() != M.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "Gram matrix must be square");
  }
  if (!(tol_rel > 0.0 && tol_rel < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "tol_rel must lie in (0, 1)");
  }
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if (((M - M.transpose()).cwiseAbs().maxCoeff()) > 1e-10 * scale) {
    throw Error(ErrorKind::DomainError, "Gram matrix is not symmetric");
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(M);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::EigFailure, "symmetric eigensolver did not converge");
  }
  // Eigen returns ascending order.
  const auto& values = solver.eigenvalues();
  const auto n = M.rows();
  const double top = n > 0 ? values(n - 1) : 0.0;
  if (!(top > 0.0)) {
    throw Error(ErrorKind::AllEigenvaluesTruncated, "Gram matrix has no positive eigenvalue");
  }
  const Eigen::Index cap = r_max > 0 ? std::min(r_max, n) : n;

  Eigen::Index keep = 0;
  while (keep < cap && values(n - 1 - keep) > tol_rel * top) ++keep;

  GramFactorization f;
  f.tol_rel = tol_rel;
  f.rank = keep;
  f.P.resize(n, keep);
  f.D.resize(keep);
  for (Eigen::Index k = 0; k < keep; ++k) {
    f.D(k) = values(n - 1 - k);
    f.P.col(k) = solver.eigenvectors().col(n - 1 - k);
  }
  return f;
}

} // namespace cfb
