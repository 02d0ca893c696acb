#pragma once

#include "cfb/balancing.hpp"
#include "cfb/data.hpp"
#include "cfb/kernels.hpp"
#include "cfb/smoothing.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cfb {

enum class Method { Proposed, AteRkhs, Ipw, Reg };
enum class Augmentation { None, Lm, Krr };

std::string_view to_string(Method m);
std::string_view to_string(Augmentation a);
//! Accepts "ate_rkhs" and "ate-rkhs" alike.
Method parse_method(std::string_view text);
Augmentation parse_augmentation(std::string_view text);

//! Evaluation grid for a one-dimensional conditioning variable, kept in both
//! scaled and original units.
struct CurveGrid
{
  Eigen::VectorXd scaled;
  Eigen::VectorXd original;

  Eigen::Index size() const { return scaled.size(); }
};

//! `points` equally spaced nodes on [lo, hi] (original units).
CurveGrid make_range_grid(double lo, double hi, int points, const ScalingMap& map, int v_col);
//! Equally spaced nodes between the q_lo and q_hi sample quantiles of the raw
//! conditioning column.
CurveGrid make_quantile_grid(const Eigen::VectorXd& v_raw,
                             const ScalingMap& map,
                             int v_col,
                             int points = 100,
                             double q_lo = 0.05,
                             double q_hi = 0.95);

struct EffectCurve
{
  Eigen::VectorXd grid;
  Eigen::VectorXd estimate;
  Method method = Method::Proposed;
  Augmentation augmentation = Augmentation::None;
  double h = 0.0;
};

// ---------------------------------------------------------------------------
// Outcome models

struct KrrOptions
{
  int folds = 5;
  //! Geometric grid 10^-6 ... 10^0, half a decade apart.
  std::vector<double> lambda_grid = default_lambda_grid();
  //! Skips cross-validation when set.
  std::optional<double> fixed_lambda;

  static std::vector<double> default_lambda_grid();
};

//! Outcome regression for one arm. KRR centres the response at the arm mean
//! and solves (M_arm + n_arm lambda I) a = Y_arm - mean.
struct ArmOutcomeFit
{
  Augmentation kind = Augmentation::Lm;
  Eigen::VectorXd lm_coef; // intercept first
  Eigen::MatrixXd krr_points;
  Eigen::VectorXd krr_coef;
  double krr_offset = 0.0;
  double lambda_ridge = 0.0;
  ReproducingKernelSpec spec;

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

struct OutcomeModel
{
  Augmentation kind = Augmentation::Lm;
  ArmOutcomeFit treated;
  ArmOutcomeFit control;

  const ArmOutcomeFit& arm(Arm a) const { return a == Arm::Treated ? treated : control; }
};

ArmOutcomeFit fit_lm(const ObservationalDataset& ds, Arm arm);
ArmOutcomeFit fit_krr(const ObservationalDataset& ds,
                      Arm arm,
                      const ReproducingKernelSpec& spec,
                      const KrrOptions& options = {});
//! Fits both arms; `kind` must be Lm or Krr.
OutcomeModel fit_outcome(const ObservationalDataset& ds,
                         Augmentation kind,
                         const ReproducingKernelSpec& spec,
                         const KrrOptions& options = {});

//! m1(X_i) and m0(X_i) for every sample.
struct OutcomePredictions
{
  Eigen::VectorXd m1;
  Eigen::VectorXd m0;

  static OutcomePredictions from_model(const OutcomeModel& model, const Eigen::MatrixXd& X);
};

// ---------------------------------------------------------------------------
// Propensity model

struct LogisticOptions
{
  int max_iters = 100;
  double grad_tol = 1e-8;
  double divergence_norm = 1e3;
  double clip = 0.01;
};

struct PropensityModel
{
  Eigen::VectorXd coef; // intercept first
  double clip = 0.01;
  int iterations = 0;
  double grad_norm = 0.0;

  Eigen::VectorXd predict_raw(const Eigen::MatrixXd& X) const;
  //! Probabilities clamped to [clip, 1 - clip].
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

//! Logistic regression of T on X (with intercept) by IRLS.
PropensityModel fit_logistic(const ObservationalDataset& ds, const LogisticOptions& options = {});

// ---------------------------------------------------------------------------
// Curves

//! tau(v) = (1/N) sum_i ktilde(i, v) Z_i with
//! Z_i = T_i wt_i Y_i - (1 - T_i) wc_i Y_i.
EffectCurve weighting_curve(const ObservationalDataset& ds,
                            const Eigen::VectorXd& w_treated,
                            const Eigen::VectorXd& w_control,
                            const SmoothingContext& ctx,
                            const CurveGrid& grid);

//! Weighting applied to outcome residuals plus the smoothed model contrast.
EffectCurve augmented_curve(const ObservationalDataset& ds,
                            const Eigen::VectorXd& w_treated,
                            const Eigen::VectorXd& w_control,
                            const OutcomePredictions& outcome,
                            const SmoothingContext& ctx,
                            const CurveGrid& grid);

struct IpwDiagnostics
{
  double clipped_fraction = 0.0;
  //! More than half of the propensities hit the clamp.
  bool degenerate = false;
};

EffectCurve ipw_curve(const ObservationalDataset& ds,
                      const Eigen::VectorXd& propensity,
                      const SmoothingContext& ctx,
                      const CurveGrid& grid,
                      const std::optional<OutcomePredictions>& augment = std::nullopt);
IpwDiagnostics ipw_diagnostics(const PropensityModel& model, const Eigen::MatrixXd& X);

EffectCurve reg_curve(const OutcomePredictions& outcome,
                      const SmoothingContext& ctx,
                      const CurveGrid& grid);

//! (1/N) sum_i ktilde(i, v_g) Z_i at every grid node.
Eigen::VectorXd smooth_responses(const Eigen::VectorXd& Z,
                                 const SmoothingContext& ctx,
                                 const CurveGrid& grid);

// ---------------------------------------------------------------------------
// End-to-end estimation on a raw dataset

struct CurveRequest
{
  Method method;
  Augmentation augmentation;
};

struct GridSpec
{
  std::optional<double> min;
  std::optional<double> max;
  int points = 100;
  double q_lo = 0.05;
  double q_hi = 0.95;
};

struct PipelineOptions
{
  std::optional<double> bandwidth;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  //! lambda1 for the ATE_RKHS weights; defaults to log N / N.
  std::optional<double> ate_lambda1;
  SmoothingOptions smoothing;
  double tol_rel = kDefaultEigTolRel;
  Eigen::Index r_max = 0;
  int max_iters = 2000;
  double step0 = 1.0;
  double tol_obj = 1e-6;
  KrrOptions krr;
  LogisticOptions logistic;
  GridSpec grid;
};

struct ArmWeights
{
  BalanceWeights treated;
  BalanceWeights control;
};

struct PipelineResult
{
  std::vector<EffectCurve> curves;
  double h = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double ate_lambda1 = 0.0;
  Eigen::Index rank = 0;
  std::optional<ArmWeights> proposed_weights;
  std::optional<ArmWeights> ate_weights;
  std::optional<IpwDiagnostics> ipw;
};

//! Scales the data, picks h, solves whichever weights and fits whichever
//! models the requests need (each at most once), and evaluates every curve
//! on the shared grid. Requires a single conditioning column.
PipelineResult run_pipeline(const ObservationalDataset& raw,
                            const std::vector<CurveRequest>& requests,
                            const PipelineOptions& options = {});

//! Weights only, for both arms, with the proposed (G_h) criterion.
PipelineResult solve_pipeline_weights(const ObservationalDataset& raw,
                                      const PipelineOptions& options = {});

} // namespace cfb
