#pragma once

#include "cfb/data.hpp"
#include "cfb/estimators.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace cfb {

//! Seed for replicate `index` of a study seeded with `seed`. Depends only on
//! the pair, so replicates can run in any order.
std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t index);

//! Four data-generating processes over Z ~ U[-2,2]^4 with
//! X = (Z1, Z1^2 + Z2, exp(Z3/2) + Z2, sin(2 Z1) + Z4) and V = X1.
//! Settings 1/3 use a propensity linear in X, 2/4 one linear in Z; 1/2 have
//! linear outcome means, 3/4 nonlinear ones.
struct SimSetting
{
  int id = 1;
  Eigen::Index n = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimulatedData
{
  ObservationalDataset ds;
  Eigen::MatrixXd Z;
  Eigen::VectorXd propensity;
  Eigen::VectorXd m1;
  Eigen::VectorXd m0;
};

SimulatedData generate(const SimSetting& setting);

double true_propensity(int id, const Eigen::Ref<const Eigen::VectorXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& z);
double outcome_mean(int id, int t, const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& z);
double true_tau(int id, double v);

//! Trapezoid integral of (estimate - tau)^2 over the curve's own grid.
double ise(const EffectCurve& curve, int setting_id);

struct MetricsRow
{
  int setting = 1;
  Method method = Method::Proposed;
  Augmentation augmentation = Augmentation::None;
  double aise = 0.0;
  double aise_se = 0.0;
  double meise = 0.0;
  int n_reps = 0;
  int n_effective = 0;
};

struct StudyConfig
{
  std::vector<int> settings{1};
  Eigen::Index n = 100;
  int reps = 100;
  std::uint64_t seed = 0;
  std::vector<Method> methods{Method::Proposed};
  std::vector<Augmentation> augmentations{Augmentation::None};
  int parallelism = 1;
  PipelineOptions pipeline;

  void validate() const;
  //! (method, augmentation) pairs in output order; reg without an outcome
  //! model is dropped.
  std::vector<CurveRequest> requests() const;
};

struct ReplicateCurve
{
  int setting;
  int replicate;
  EffectCurve curve;
};

struct StudyResult
{
  std::vector<MetricsRow> rows;
  //! ise[row][replicate]; NaN where the replicate failed.
  std::vector<std::vector<double>> ise;
  std::vector<ReplicateCurve> curves;
  std::vector<std::string> failures;
};

StudyResult run_study(const StudyConfig& config, bool keep_curves = false);

} // namespace cfb
