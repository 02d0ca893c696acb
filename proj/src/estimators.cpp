#include "cfb/estimators.hpp"

#include "cfb/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cfb {

std::string_view to_string(Method m)
{
  switch (m) {
    case Method::Proposed: return "proposed";
    case Method::AteRkhs: return "ate_rkhs";
    case Method::Ipw: return "ipw";
    case Method::Reg: return "reg";
  }
  return "unknown";
}

std::string_view to_string(Augmentation a)
{
  switch (a) {
    case Augmentation::None: return "none";
    case Augmentation::Lm: return "lm";
    case Augmentation::Krr: return "krr";
  }
  return "unknown";
}

Method parse_method(std::string_view text)
{
  if (text == "proposed") return Method::Proposed;
  if (text == "ate_rkhs" || text == "ate-rkhs") return Method::AteRkhs;
  if (text == "ipw") return Method::Ipw;
  if (text == "reg") return Method::Reg;
  throw Error(ErrorKind::InvalidConfig, "unknown method '" + std::string(text) + "'");
}

Augmentation parse_augmentation(std::string_view text)
{
  if (text == "none") return Augmentation::None;
  if (text == "lm") return Augmentation::Lm;
  if (text == "krr") return Augmentation::Krr;
  throw Error(ErrorKind::InvalidConfig, "unknown augmentation '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Grids

CurveGrid make_range_grid(double lo, double hi, int points, const ScalingMap& map, int v_col)
{
  if (points < 1) {
    throw Error(ErrorKind::InvalidConfig, "grid needs at least one point");
  }
  if (points == 1 && lo != hi) {
    throw Error(ErrorKind::InvalidConfig, "a single-point grid needs grid-min == grid-max");
  }
  if (points > 1 && !(hi > lo)) {
    throw Error(ErrorKind::InvalidConfig, "grid-max must exceed grid-min");
  }
  CurveGrid g;
  g.original.resize(points);
  g.scaled.resize(points);
  for (int k = 0; k < points; ++k) {
    const double t = points == 1 ? 0.0 : static_cast<double>(k) / (points - 1);
    g.original(k) = k == points - 1 ? hi : lo + t * (hi - lo);
    g.scaled(k) = map.scale(v_col, g.original(k));
  }
  return g;
}

CurveGrid make_quantile_grid(const Eigen::VectorXd& v_raw,
                             const ScalingMap& map,
                             int v_col,
                             int points,
                             double q_lo,
                             double q_hi)
{
  const double lo = quantile(v_raw, q_lo);
  const double hi = points == 1 ? lo : quantile(v_raw, q_hi);
  return make_range_grid(lo, hi, points, map, v_col);
}

// ---------------------------------------------------------------------------
// Outcome models

std::vector<double> KrrOptions::default_lambda_grid()
{
  std::vector<double> grid;
  for (int k = 0; k <= 12; ++k) grid.push_back(std::pow(10.0, -6.0 + 0.5 * k));
  return grid;
}

namespace {

struct ArmData
{
  Eigen::MatrixXd X;
  Eigen::VectorXd Y;
};

ArmData select_arm(const ObservationalDataset& ds, Arm arm)
{
  const Eigen::VectorXd a = arm_indicator(ds.T, arm);
  const auto m = static_cast<Eigen::Index>(std::llround(a.sum()));
  if (m < 1) {
    throw Error(ErrorKind::InvalidDataset, "outcome model arm has no samples");
  }
  ArmData out{Eigen::MatrixXd(m, ds.d()), Eigen::VectorXd(m)};
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (a(i) > 0.5) {
      out.X.row(k) = ds.X.row(i);
      out.Y(k) = ds.Y(i);
      ++k;
    }
  }
  return out;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X)
{
  Eigen::MatrixXd A(X.rows(), X.cols() + 1);
  A.col(0).setOnes();
  A.rightCols(X.cols()) = X;
  return A;
}

Eigen::VectorXd krr_solve(const Eigen::MatrixXd& M, const Eigen::VectorXd& rhs, double ridge)
{
  Eigen::MatrixXd A = M;
  A.diagonal().array() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success) {
    throw Error(ErrorKind::SolveFailure, "kernel ridge system could not be factorized");
  }
  Eigen::VectorXd a = ldlt.solve(rhs);
  if (!a.allFinite()) {
    throw Error(ErrorKind::SolveFailure, "kernel ridge solution is not finite");
  }
  return a;
}

double select_ridge(const ArmData& data, const ReproducingKernelSpec& spec, const KrrOptions& opt)
{
  const auto n = data.X.rows();
  if (opt.lambda_grid.empty()) {
    throw Error(ErrorKind::InvalidConfig, "KRR lambda grid is empty");
  }
  const auto folds = static_cast<Eigen::Index>(std::min<Eigen::Index>(opt.folds, n));
  if (folds < 2) return *std::max_element(opt.lambda_grid.begin(), opt.lambda_grid.end());

  std::vector<double> cv_error(opt.lambda_grid.size(), 0.0);
  for (Eigen::Index f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < n; ++i) (i % folds == f ? test : train).push_back(i);
    const auto nt = static_cast<Eigen::Index>(train.size());
    Eigen::MatrixXd Xtr(nt, data.X.cols()), Xte(test.size(), data.X.cols());
    Eigen::VectorXd ytr(nt), yte(test.size());
    for (Eigen::Index k = 0; k < nt; ++k) {
      Xtr.row(k) = data.X.row(train[k]);
      ytr(k) = data.Y(train[k]);
    }
    for (std::size_t k = 0; k < test.size(); ++k) {
      Xte.row(k) = data.X.row(test[k]);
      yte(k) = data.Y(test[k]);
    }
    const double offset = ytr.mean();
    const Eigen::MatrixXd Mtr = gram_matrix(Xtr, spec);
    const Eigen::MatrixXd Mte = cross_gram(Xte, Xtr, spec);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Mtr);
    if (es.info() != Eigen::Success) {
      throw Error(ErrorKind::SolveFailure, "eigensolver failed during KRR cross-validation");
    }
    const Eigen::VectorXd proj = es.eigenvectors().transpose() * (ytr.array() - offset).matrix();
    const Eigen::VectorXd evals = es.eigenvalues().cwiseMax(0.0);
    for (std::size_t l = 0; l < opt.lambda_grid.size(); ++l) {
      const double ridge = static_cast<double>(nt) * opt.lambda_grid[l];
      const Eigen::VectorXd a =
        es.eigenvectors() * (proj.array() / (evals.array() + ridge)).matrix();
      const Eigen::VectorXd pred = (Mte * a).array() + offset;
      cv_error[l] += (pred - yte).squaredNorm();
    }
  }

  // Ties go to the larger lambda.
  std::size_t best = 0;
  for (std::size_t l = 1; l < cv_error.size(); ++l) {
    const bool better = cv_error[l] < cv_error[best] ||
                        (cv_error[l] == cv_error[best] && opt.lambda_grid[l] > opt.lambda_grid[best]);
    if (better) best = l;
  }
  return opt.lambda_grid[best];
}

} // namespace

Eigen::VectorXd ArmOutcomeFit::predict(const Eigen::MatrixXd& X) const
{
  if (kind == Augmentation::Lm) {
    if (X.cols() + 1 != lm_coef.size()) {
      throw Error(ErrorKind::DimensionMismatch, "LM prediction with wrong covariate count");
    }
    return with_intercept(X) * lm_coef;
  }
  Eigen::VectorXd out = cross_gram(X, krr_points, spec) * krr_coef;
  out.array() += krr_offset;
  return out;
}

ArmOutcomeFit fit_lm(const ObservationalDataset& ds, Arm arm)
{
  const auto data = select_arm(ds, arm);
  ArmOutcomeFit fit;
  fit.kind = Augmentation::Lm;
  fit.lm_coef = with_intercept(data.X).completeOrthogonalDecomposition().solve(data.Y);
  if (!fit.lm_coef.allFinite()) {
    throw Error(ErrorKind::SolveFailure, "least-squares coefficients are not finite");
  }
  return fit;
}

ArmOutcomeFit fit_krr(const ObservationalDataset& ds,
                      Arm arm,
                      const ReproducingKernelSpec& spec,
                      const KrrOptions& options)
{
  const auto data = select_arm(ds, arm);
  ArmOutcomeFit fit;
  fit.kind = Augmentation::Krr;
  fit.spec = spec;
  fit.lambda_ridge = options.fixed_lambda ? *options.fixed_lambda : select_ridge(data, spec, options);
  if (!(fit.lambda_ridge > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "ridge level must be positive");
  }
  fit.krr_points = data.X;
  fit.krr_offset = data.Y.mean();
  const Eigen::MatrixXd M = gram_matrix(data.X, spec);
  fit.krr_coef = krr_solve(M,
                           (data.Y.array() - fit.krr_offset).matrix(),
                           static_cast<double>(data.X.rows()) * fit.lambda_ridge);
  return fit;
}

OutcomeModel fit_outcome(const ObservationalDataset& ds,
                         Augmentation kind,
                         const ReproducingKernelSpec& spec,
                         const KrrOptions& options)
{
  OutcomeModel model;
  model.kind = kind;
  switch (kind) {
    case Augmentation::Lm:
      model.treated = fit_lm(ds, Arm::Treated);
      model.control = fit_lm(ds, Arm::Control);
      break;
    case Augmentation::Krr:
      model.treated = fit_krr(ds, Arm::Treated, spec, options);
      model.control = fit_krr(ds, Arm::Control, spec, options);
      break;
    case Augmentation::None:
      throw Error(ErrorKind::InvalidConfig, "no outcome model for augmentation 'none'");
  }
  return model;
}

OutcomePredictions OutcomePredictions::from_model(const OutcomeModel& model,
                                                  const Eigen::MatrixXd& X)
{
  return {model.treated.predict(X), model.control.predict(X)};
}

// ---------------------------------------------------------------------------
// Propensity

namespace {

Eigen::VectorXd logistic(const Eigen::VectorXd& eta)
{
  return eta.unaryExpr([](double e) {
    return e >= 0.0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e));
  });
}

} // namespace

Eigen::VectorXd PropensityModel::predict_raw(const Eigen::MatrixXd& X) const
{
  if (X.cols() + 1 != coef.size()) {
    throw Error(ErrorKind::DimensionMismatch, "propensity prediction with wrong covariate count");
  }
  return logistic(with_intercept(X) * coef);
}

Eigen::VectorXd PropensityModel::predict(const Eigen::MatrixXd& X) const
{
  return predict_raw(X).cwiseMax(clip).cwiseMin(1.0 - clip);
}

PropensityModel fit_logistic(const ObservationalDataset& ds, const LogisticOptions& options)
{
  const Eigen::MatrixXd A = with_intercept(ds.X);
  const auto p = A.cols();
  if (Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(A).rank() < p) {
    throw Error(ErrorKind::RankDeficient, "propensity design matrix is rank deficient");
  }

  PropensityModel model;
  model.clip = options.clip;
  model.coef = Eigen::VectorXd::Zero(p);
  for (int it = 0; it <= options.max_iters; ++it) {
    const Eigen::VectorXd prob = logistic(A * model.coef);
    const Eigen::VectorXd resid = ds.T - prob;
    const Eigen::VectorXd grad = A.transpose() * resid;
    model.grad_norm = grad.norm();
    model.iterations = it;
    if (model.grad_norm < options.grad_tol) {
      // All residuals vanishing means the arms are perfectly separated and
      // the likelihood has no finite maximizer.
      if (resid.cwiseAbs().maxCoeff() < 1e-6) {
        throw Error(ErrorKind::SeparationDetected, "treatment is perfectly predicted by X");
      }
      break;
    }
    if (it == options.max_iters) break;
    const Eigen::VectorXd W = (prob.array() * (1.0 - prob.array())).matrix();
    const Eigen::MatrixXd H = A.transpose() * W.asDiagonal() * A;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    const Eigen::VectorXd step = ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      throw Error(ErrorKind::SeparationDetected, "IRLS weights collapsed");
    }
    model.coef += step;
    if (model.coef.norm() > options.divergence_norm) {
      throw Error(ErrorKind::SeparationDetected, "logistic coefficients diverge");
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Curves

Eigen::VectorXd smooth_responses(const Eigen::VectorXd& Z,
                                 const SmoothingContext& ctx,
                                 const CurveGrid& grid)
{
  Eigen::VectorXd out(grid.size());
  Eigen::VectorXd v(1);
  const double nd = static_cast<double>(ctx.n());
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    v(0) = grid.scaled(g);
    out(g) = ctx.ktilde_all(v).dot(Z) / nd;
  }
  return out;
}

namespace {

void check_curve_inputs(const ObservationalDataset& ds,
                        const SmoothingContext& ctx,
                        const Eigen::VectorXd& wt,
                        const Eigen::VectorXd& wc)
{
  if (ctx.d1() != 1) {
    throw Error(ErrorKind::DimensionMismatch, "effect curves need a single conditioning column");
  }
  if (ctx.n() != ds.n() || wt.size() != ds.n() || wc.size() != ds.n()) {
    throw Error(ErrorKind::DimensionMismatch, "weights, data and smoother disagree on N");
  }
}

EffectCurve make_curve(const CurveGrid& grid, Eigen::VectorXd estimate, double h)
{
  EffectCurve c;
  c.grid = grid.original;
  c.estimate = std::move(estimate);
  c.h = h;
  return c;
}

} // namespace

EffectCurve weighting_curve(const ObservationalDataset& ds,
                            const Eigen::VectorXd& w_treated,
                            const Eigen::VectorXd& w_control,
                            const SmoothingContext& ctx,
                            const CurveGrid& grid)
{
  check_curve_inputs(ds, ctx, w_treated, w_control);
  const Eigen::VectorXd Z =
    (ds.T.array() * w_treated.array() * ds.Y.array() -
     (1.0 - ds.T.array()) * w_control.array() * ds.Y.array())
      .matrix();
  return make_curve(grid, smooth_responses(Z, ctx, grid), ctx.h());
}

EffectCurve augmented_curve(const ObservationalDataset& ds,
                            const Eigen::VectorXd& w_treated,
                            const Eigen::VectorXd& w_control,
                            const OutcomePredictions& outcome,
                            const SmoothingContext& ctx,
                            const CurveGrid& grid)
{
  check_curve_inputs(ds, ctx, w_treated, w_control);
  const auto& m1 = outcome.m1.array();
  const auto& m0 = outcome.m0.array();
  const Eigen::VectorXd Z =
    ((m1 - m0) + (ds.T.array() * w_treated.array() * (ds.Y.array() - m1) -
                  (1.0 - ds.T.array()) * w_control.array() * (ds.Y.array() - m0)))
      .matrix();
  return make_curve(grid, smooth_responses(Z, ctx, grid), ctx.h());
}

EffectCurve ipw_curve(const ObservationalDataset& ds,
                      const Eigen::VectorXd& propensity,
                      const SmoothingContext& ctx,
                      const CurveGrid& grid,
                      const std::optional<OutcomePredictions>& augment)
{
  const Eigen::VectorXd wt = propensity.cwiseInverse();
  const Eigen::VectorXd wc = (1.0 - propensity.array()).inverse().matrix();
  EffectCurve c = augment ? augmented_curve(ds, wt, wc, *augment, ctx, grid)
                          : weighting_curve(ds, wt, wc, ctx, grid);
  c.method = Method::Ipw;
  return c;
}

IpwDiagnostics ipw_diagnostics(const PropensityModel& model, const Eigen::MatrixXd& X)
{
  const Eigen::VectorXd raw = model.predict_raw(X);
  IpwDiagnostics d;
  const auto clipped =
    (raw.array() < model.clip || raw.array() > 1.0 - model.clip).count();
  d.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(raw.size());
  d.degenerate = d.clipped_fraction > 0.5;
  return d;
}

EffectCurve reg_curve(const OutcomePredictions& outcome,
                      const SmoothingContext& ctx,
                      const CurveGrid& grid)
{
  if (ctx.d1() != 1 || outcome.m1.size() != ctx.n() || outcome.m0.size() != ctx.n()) {
    throw Error(ErrorKind::DimensionMismatch, "outcome predictions do not match the smoother");
  }
  EffectCurve c = make_curve(grid, smooth_responses(outcome.m1 - outcome.m0, ctx, grid), ctx.h());
  c.method = Method::Reg;
  return c;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

struct PreparedData
{
  ScalingMap map;
  ObservationalDataset ds;
  SmoothingContext ctx;
  double h;
};

PreparedData prepare(const ObservationalDataset& raw, const PipelineOptions& options)
{
  raw.validate();
  if (raw.d1() != 1) {
    throw Error(ErrorKind::InvalidConfig, "curve estimation needs exactly one conditioning column");
  }
  auto map = fit_scaling(raw);
  auto ds = apply_scaling(raw, map);
  Eigen::MatrixXd V = ds.V();
  const double h = options.bandwidth ? *options.bandwidth : bandwidth_default(V);
  SmoothingContext ctx(std::move(V), h, options.smoothing);
  return {std::move(map), std::move(ds), std::move(ctx), h};
}

ArmWeights solve_both_arms(const ObservationalDataset& ds,
                           const GramFactorization& gram,
                           const Eigen::MatrixXd& G,
                           const BalancingConfig& base)
{
  ArmWeights out;
  BalancingConfig cfg = base;
  cfg.arm = Arm::Treated;
  out.treated = solve_weights(ds, gram, G, cfg);
  cfg.arm = Arm::Control;
  out.control = solve_weights(ds, gram, G, cfg);
  return out;
}

BalancingConfig balancing_config(const PipelineOptions& options,
                                 const ObservationalDataset& ds,
                                 double h)
{
  BalancingConfig cfg = BalancingConfig::defaults(ds.n(), h, ds.d1(), Arm::Treated);
  if (options.lambda1) cfg.lambda1 = *options.lambda1;
  if (options.lambda2) cfg.lambda2 = *options.lambda2;
  cfg.max_iters = options.max_iters;
  cfg.step0 = options.step0;
  cfg.tol_obj = options.tol_obj;
  cfg.validate();
  return cfg;
}

} // namespace

PipelineResult run_pipeline(const ObservationalDataset& raw,
                            const std::vector<CurveRequest>& requests,
                            const PipelineOptions& options)
{
  auto prep = prepare(raw, options);
  const auto& ds = prep.ds;
  const auto& ctx = prep.ctx;
  const int v_col = ds.v_cols.front();

  const CurveGrid grid =
    options.grid.min && options.grid.max
      ? make_range_grid(*options.grid.min, *options.grid.max, options.grid.points, prep.map, v_col)
      : make_quantile_grid(raw.X.col(v_col), prep.map, v_col, options.grid.points,
                           options.grid.q_lo, options.grid.q_hi);

  auto wants = [&](auto pred) { return std::any_of(requests.begin(), requests.end(), pred); };
  const bool need_proposed = wants([](const CurveRequest& r) { return r.method == Method::Proposed; });
  const bool need_ate = wants([](const CurveRequest& r) { return r.method == Method::AteRkhs; });
  const bool need_ipw = wants([](const CurveRequest& r) { return r.method == Method::Ipw; });
  for (const auto& r : requests) {
    if (r.method == Method::Reg && r.augmentation == Augmentation::None) {
      throw Error(ErrorKind::InvalidConfig, "method 'reg' needs an outcome model (lm or krr)");
    }
  }

  PipelineResult result;
  result.h = prep.h;
  const auto spec = ReproducingKernelSpec::from_columns(ds.col_kinds);
  const BalancingConfig cfg = balancing_config(options, ds, prep.h);
  result.lambda1 = cfg.lambda1;
  result.lambda2 = cfg.lambda2;

  if (need_proposed || need_ate) {
    const auto gram = truncated_eig(gram_matrix(ds.X, spec), options.tol_rel, options.r_max);
    result.rank = gram.rank;
    if (need_proposed) result.proposed_weights = solve_both_arms(ds, gram, compute_Gh(ctx), cfg);
    if (need_ate) {
      BalancingConfig ate_cfg = cfg;
      ate_cfg.lambda1 = options.ate_lambda1
                          ? *options.ate_lambda1
                          : BalancingConfig::marginal_defaults(ds.n(), Arm::Treated).lambda1;
      ate_cfg.validate();
      result.ate_lambda1 = ate_cfg.lambda1;
      result.ate_weights = solve_both_arms(ds, gram, marginal_gram(ds.n()), ate_cfg);
    }
  }

  std::optional<OutcomePredictions> lm_pred, krr_pred;
  auto predictions = [&](Augmentation a) -> const OutcomePredictions& {
    auto& slot = a == Augmentation::Lm ? lm_pred : krr_pred;
    if (!slot) {
      slot = OutcomePredictions::from_model(fit_outcome(ds, a, spec, options.krr), ds.X);
    }
    return *slot;
  };

  Eigen::VectorXd propensity;
  if (need_ipw) {
    const auto model = fit_logistic(ds, options.logistic);
    propensity = model.predict(ds.X);
    result.ipw = ipw_diagnostics(model, ds.X);
  }

  for (const auto& r : requests) {
    EffectCurve c;
    switch (r.method) {
      case Method::Proposed:
      case Method::AteRkhs: {
        const auto& w = r.method == Method::Proposed ? *result.proposed_weights : *result.ate_weights;
        c = r.augmentation == Augmentation::None
              ? weighting_curve(ds, w.treated.w, w.control.w, ctx, grid)
              : augmented_curve(ds, w.treated.w, w.control.w, predictions(r.augmentation), ctx, grid);
        break;
      }
      case Method::Ipw:
        c = r.augmentation == Augmentation::None
              ? ipw_curve(ds, propensity, ctx, grid)
              : ipw_curve(ds, propensity, ctx, grid, predictions(r.augmentation));
        break;
      case Method::Reg:
        c = reg_curve(predictions(r.augmentation), ctx, grid);
        break;
    }
    c.method = r.method;
    c.augmentation = r.augmentation;
    result.curves.push_back(std::move(c));
  }
  return result;
}

PipelineResult solve_pipeline_weights(const ObservationalDataset& raw, const PipelineOptions& options)
{
  raw.validate();
  auto map = fit_scaling(raw);
  auto ds = apply_scaling(raw, map);
  Eigen::MatrixXd V = ds.V();
  const double h = options.bandwidth ? *options.bandwidth : bandwidth_default(V);
  const SmoothingContext ctx(std::move(V), h, options.smoothing);

  PipelineResult result;
  result.h = h;
  const BalancingConfig cfg = balancing_config(options, ds, h);
  result.lambda1 = cfg.lambda1;
  result.lambda2 = cfg.lambda2;
  const auto spec = ReproducingKernelSpec::from_columns(ds.col_kinds);
  const auto gram = truncated_eig(gram_matrix(ds.X, spec), options.tol_rel, options.r_max);
  result.rank = gram.rank;
  result.proposed_weights = solve_both_arms(ds, gram, compute_Gh(ctx), cfg);
  return result;
}

} // namespace cfb
