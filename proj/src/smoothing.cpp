#include "cfb/smoothing.hpp"

#include "cfb/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cfb {

double gaussian_K(const Eigen::Ref<const Eigen::VectorXd>& s)
{
  const double norm = std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(s.size()));
  return norm * std::exp(-0.5 * s.squaredNorm());
}

void quadrature_grid(int q, Eigen::Index dim, Eigen::MatrixXd& nodes, Eigen::VectorXd& weights)
{
  if (q < 2) {
    throw Error(ErrorKind::InvalidConfig, "quadrature needs at least 2 points per axis");
  }
  const double step = 1.0 / (q - 1);
  // Gregory end corrections (exact for cubics) once there are enough nodes,
  // plain trapezoid otherwise.
  Eigen::VectorXd axis = Eigen::VectorXd::Constant(q, step);
  if (q >= 8) {
    const double ends[3] = {3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0};
    for (int k = 0; k < 3; ++k) {
      axis(k) = ends[k] * step;
      axis(q - 1 - k) = ends[k] * step;
    }
  } else {
    axis(0) = axis(q - 1) = 0.5 * step;
  }

  Eigen::Index total = 1;
  for (Eigen::Index k = 0; k < dim; ++k) total *= q;

  nodes.resize(total, dim);
  weights.resize(total);
  for (Eigen::Index idx = 0; idx < total; ++idx) {
    Eigen::Index rem = idx;
    double w = 1.0;
    for (Eigen::Index k = 0; k < dim; ++k) {
      const auto j = rem % q;
      rem /= q;
      nodes(idx, k) = j == q - 1 ? 1.0 : static_cast<double>(j) * step;
      w *= axis(j);
    }
    weights(idx) = w;
  }
}

SmoothingContext::SmoothingContext(Eigen::MatrixXd V, double h, SmoothingOptions options)
  : V_(std::move(V))
  , h_(h)
  , options_(options)
{
  if (!(h_ > 0.0) || !std::isfinite(h_)) {
    throw Error(ErrorKind::InvalidConfig, "bandwidth must be positive and finite");
  }
  if (V_.rows() < 1 || V_.cols() < 1) {
    throw Error(ErrorKind::DimensionMismatch, "conditioning matrix is empty");
  }
  if (!(options_.denom_floor > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "denominator floor must be positive");
  }
  quadrature_grid(options_.quadrature_points, V_.cols(), nodes_, node_weights_);
}

Eigen::VectorXd SmoothingContext::ktilde_all(const Eigen::Ref<const Eigen::VectorXd>& v) const
{
  if (v.size() != d1()) {
    throw Error(ErrorKind::DimensionMismatch, "evaluation point has wrong dimension");
  }
  // The Gaussian constant cancels in the ratio; shifting by the smallest
  // squared distance keeps the ratio exact when every kernel value underflows.
  Eigen::VectorXd r2(n());
  for (Eigen::Index i = 0; i < n(); ++i) {
    r2(i) = (V_.row(i).transpose() - v).squaredNorm() / (h_ * h_);
  }
  const Eigen::VectorXd k = (-0.5 * (r2.array() - r2.minCoeff())).exp().matrix();
  const double denom = std::max(k.mean(), options_.denom_floor);
  return k / denom;
}

double SmoothingContext::ktilde(Eigen::Index i, const Eigen::Ref<const Eigen::VectorXd>& v) const
{
  return ktilde_all(v)(i);
}

Eigen::MatrixXd SmoothingContext::ktilde_matrix(const Eigen::MatrixXd& points) const
{
  Eigen::MatrixXd out(n(), points.rows());
  for (Eigen::Index g = 0; g < points.rows(); ++g) {
    out.col(g) = ktilde_all(points.row(g).transpose());
  }
  return out;
}

Eigen::MatrixXd compute_Gh(const SmoothingContext& ctx)
{
  const auto n = static_cast<double>(ctx.n());
  const auto q = static_cast<double>(ctx.nodes().rows());
  if (q * n * n > ctx.options().quadrature_budget) {
    throw Error(ErrorKind::QuadratureBudgetExceeded,
                "G_h needs " + std::to_string(q * n * n) + " kernel products, cap is " +
                  std::to_string(ctx.options().quadrature_budget));
  }
  Eigen::MatrixXd F = ctx.ktilde_matrix(ctx.nodes());
  F = F * ctx.node_weights().cwiseSqrt().asDiagonal();

  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(ctx.n(), ctx.n());
  G.selfadjointView<Eigen::Lower>().rankUpdate(F);
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
  return G;
}

double quantile(Eigen::VectorXd values, double p)
{
  if (values.size() == 0) {
    throw Error(ErrorKind::InvalidConfig, "quantile of an empty sample");
  }
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(pos));
  const auto hi = std::min<Eigen::Index>(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values(lo) + frac * (values(hi) - values(lo));
}

double bandwidth_default(const Eigen::VectorXd& v, Eigen::Index n)
{
  if (v.size() < 2) {
    throw Error(ErrorKind::DegenerateSpread, "bandwidth rule needs at least 2 values");
  }
  const double mean = v.mean();
  const double sd =
    std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
  const double iqr = quantile(v, 0.75) - quantile(v, 0.25);
  double scale = std::min(sd, iqr / 1.349);
  if (!(scale > 0.0)) scale = sd;
  if (!(scale > 0.0)) {
    throw Error(ErrorKind::DegenerateSpread, "conditioning variable has zero spread");
  }
  // 1.06 * scale * N^{-1/5} is the reference rule; the N^{1/5} * N^{-2/7}
  // factor moves it to the undersmoothed order.
  const auto nd = static_cast<double>(n);
  return 1.06 * scale * std::pow(nd, -0.2) * std::pow(nd, 0.2) * std::pow(nd, -2.0 / 7.0);
}

double bandwidth_default(const Eigen::MatrixXd& V)
{
  double log_sum = 0.0;
  for (Eigen::Index k = 0; k < V.cols(); ++k) {
    log_sum += std::log(bandwidth_default(Eigen::VectorXd(V.col(k)), V.rows()));
  }
  return std::exp(log_sum / static_cast<double>(V.cols()));
}

} // namespace cfb
