#include "cfb/simulation.hpp"

#include "cfb/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

namespace cfb {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

} // namespace

std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t index)
{
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

void SimSetting::validate() const
{
  if (id < 1 || id > 4) {
    throw Error(ErrorKind::InvalidConfig, "simulation setting must be 1, 2, 3 or 4");
  }
  if (n < 2) {
    throw Error(ErrorKind::InvalidConfig, "simulation needs N >= 2");
  }
}

double true_propensity(int id,
                       const Eigen::Ref<const Eigen::VectorXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& z)
{
  const double eta = (id == 1 || id == 3) ? x(0) + x(2) : z(0) + z(1) + z(2);
  return 1.0 / (1.0 + std::exp(eta));
}

double outcome_mean(int id,
                    int t,
                    const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& z)
{
  const double sign = 2.0 * t - 1.0;
  if (id == 1 || id == 2) {
    return 10.0 + x(0) + sign * (x(1) + x(3));
  }
  return 10.0 + sign * (z(0) * z(0) + 2.0 * z(0) * std::sin(2.0 * z(0))) + z(1) * z(1) +
         std::sin(2.0 * z(2)) * z(3) * z(3);
}

double true_tau(int id, double v)
{
  if (id == 1 || id == 2) return 2.0 * v * v + 2.0 * std::sin(2.0 * v);
  return 2.0 * v * v + 4.0 * v * std::sin(2.0 * v);
}

SimulatedData generate(const SimSetting& setting)
{
  setting.validate();
  const auto n = setting.n;
  std::mt19937_64 rng(setting.seed);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  SimulatedData out;
  out.Z.resize(n, 4);
  out.propensity.resize(n);
  out.m1.resize(n);
  out.m0.resize(n);
  auto& ds = out.ds;
  ds.X.resize(n, 4);
  ds.T.resize(n);
  ds.Y.resize(n);
  ds.v_cols = {0};
  ds.col_kinds.assign(4, ColumnKind::Continuous);
  ds.col_names = {"X1", "X2", "X3", "X4"};

  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) out.Z(i, j) = unif(rng);
    const Eigen::VectorXd z = out.Z.row(i).transpose();
    ds.X(i, 0) = z(0);
    ds.X(i, 1) = z(0) * z(0) + z(1);
    ds.X(i, 2) = std::exp(z(2) / 2.0) + z(1);
    ds.X(i, 3) = std::sin(2.0 * z(0)) + z(3);
    const Eigen::VectorXd x = ds.X.row(i).transpose();

    out.propensity(i) = true_propensity(setting.id, x, z);
    ds.T(i) = unit(rng) < out.propensity(i) ? 1.0 : 0.0;
    out.m1(i) = outcome_mean(setting.id, 1, x, z);
    out.m0(i) = outcome_mean(setting.id, 0, x, z);
    ds.Y(i) = (ds.T(i) > 0.5 ? out.m1(i) : out.m0(i)) + noise(rng);
  }
  return out;
}

double ise(const EffectCurve& curve, int setting_id)
{
  const auto g = curve.grid.size();
  if (g < 2) return 0.0;
  double total = 0.0;
  auto sq = [&](Eigen::Index k) {
    const double e = curve.estimate(k) - true_tau(setting_id, curve.grid(k));
    return e * e;
  };
  for (Eigen::Index k = 0; k + 1 < g; ++k) {
    total += 0.5 * (curve.grid(k + 1) - curve.grid(k)) * (sq(k) + sq(k + 1));
  }
  return total;
}

void StudyConfig::validate() const
{
  if (reps < 2) throw Error(ErrorKind::InvalidConfig, "a study needs at least 2 replicates");
  if (settings.empty()) throw Error(ErrorKind::InvalidConfig, "no simulation settings given");
  for (int s : settings) SimSetting{s, n, 0}.validate();
  if (methods.empty() || augmentations.empty()) {
    throw Error(ErrorKind::InvalidConfig, "methods and augmentations must be non-empty");
  }
  if (requests().empty()) {
    throw Error(ErrorKind::InvalidConfig, "no valid (method, augmentation) combination");
  }
  if (parallelism < 1) throw Error(ErrorKind::InvalidConfig, "parallelism must be >= 1");
}

std::vector<CurveRequest> StudyConfig::requests() const
{
  std::vector<CurveRequest> out;
  for (auto m : methods) {
    for (auto a : augmentations) {
      if (m == Method::Reg && a == Augmentation::None) continue;
      out.push_back({m, a});
    }
  }
  return out;
}

namespace {

struct ReplicateOutcome
{
  std::vector<double> ise;
  std::vector<EffectCurve> curves;
  std::string failure;
};

double median(std::vector<double> v)
{
  std::sort(v.begin(), v.end());
  const auto m = v.size();
  return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

} // namespace

StudyResult run_study(const StudyConfig& config, bool keep_curves)
{
  config.validate();
  const auto requests = config.requests();
  const auto n_settings = config.settings.size();
  const auto reps = static_cast<std::size_t>(config.reps);
  const auto n_tasks = n_settings * reps;

  std::vector<ReplicateOutcome> outcomes(n_tasks);
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= n_tasks) return;
      const int id = config.settings[task / reps];
      const auto rep = task % reps;
      auto& out = outcomes[task];
      try {
        const auto sim = generate(SimSetting{id, config.n, replicate_seed(config.seed, rep)});
        auto result = run_pipeline(sim.ds, requests, config.pipeline);
        for (auto& c : result.curves) out.ise.push_back(ise(c, id));
        if (keep_curves) out.curves = std::move(result.curves);
      } catch (const std::exception& e) {
        out.ise.assign(requests.size(), std::numeric_limits<double>::quiet_NaN());
        out.failure = "setting " + std::to_string(id) + " replicate " + std::to_string(rep) +
                      ": " + e.what();
      }
    }
  };

  const auto threads = static_cast<std::size_t>(std::min<std::size_t>(
    static_cast<std::size_t>(config.parallelism), n_tasks));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  StudyResult result;
  for (std::size_t s = 0; s < n_settings; ++s) {
    for (std::size_t r = 0; r < requests.size(); ++r) {
      std::vector<double> all(reps), ok;
      for (std::size_t k = 0; k < reps; ++k) {
        all[k] = outcomes[s * reps + k].ise[r];
        if (std::isfinite(all[k])) ok.push_back(all[k]);
      }
      MetricsRow row;
      row.setting = config.settings[s];
      row.method = requests[r].method;
      row.augmentation = requests[r].augmentation;
      row.n_reps = config.reps;
      row.n_effective = static_cast<int>(ok.size());
      if (!ok.empty()) {
        double sum = 0.0;
        for (double v : ok) sum += v;
        row.aise = sum / static_cast<double>(ok.size());
        double ss = 0.0;
        for (double v : ok) ss += (v - row.aise) * (v - row.aise);
        row.aise_se = ok.size() > 1
                        ? std::sqrt(ss / static_cast<double>(ok.size() - 1)) /
                            std::sqrt(static_cast<double>(ok.size()))
                        : 0.0;
        row.meise = median(ok);
      } else {
        row.aise = row.aise_se = row.meise = std::numeric_limits<double>::quiet_NaN();
      }
      result.rows.push_back(row);
      result.ise.push_back(std::move(all));
    }
  }
  for (std::size_t task = 0; task < n_tasks; ++task) {
    auto& o = outcomes[task];
    if (!o.failure.empty()) result.failures.push_back(o.failure);
    if (keep_curves) {
      for (auto& c : o.curves) {
        result.curves.push_back({config.settings[task / reps], static_cast<int>(task % reps),
                                 std::move(c)});
      }
    }
  }
  return result;
}

} // namespace cfb
