#include "cli.hpp"

#include "cfb/data.hpp"
#include "cfb/error.hpp"
#include "cfb/estimators.hpp"
#include "cfb/simulation.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

namespace cfb::cli {

namespace {

using Pairs = std::vector<std::pair<std::string, std::string>>;

std::string trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double x)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string join(const std::vector<std::string>& items)
{
  std::string out;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (k) out += ',';
    out += items[k];
  }
  return out;
}

template <class T>
std::string opt_str(const std::optional<T>& v)
{
  if (!v) return "auto";
  if constexpr (std::is_floating_point_v<T>) {
    return fmt(*v);
  } else {
    return std::to_string(*v);
  }
}

//! Options shared by every command that runs the estimation pipeline.
struct PipelineFlags
{
  std::optional<double> bandwidth;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<double> ate_lambda1;
  int quad_points = kDefaultQuadraturePoints;
  double tol_rel = kDefaultEigTolRel;
  long r_max = 0;
  int max_iters = 2000;
  double step0 = 1.0;
  double tol_obj = 1e-6;
  double clip = 0.01;

  void add(CLI::App* app)
  {
    app->add_option("--bandwidth", bandwidth, "Smoothing bandwidth in scaled [0,1] V units")
      ->check(CLI::PositiveNumber);
    app->add_option("--lambda1", lambda1, "Penalty on the balancing function norm")
      ->check(CLI::PositiveNumber);
    app->add_option("--lambda2", lambda2, "Penalty on weight variability")
      ->check(CLI::PositiveNumber);
    app->add_option("--ate-lambda1", ate_lambda1, "lambda1 for the ATE_RKHS weights")
      ->check(CLI::PositiveNumber);
    app->add_option("--quad-points", quad_points, "Quadrature nodes per V dimension")
      ->check(CLI::Range(2, 100000));
    app->add_option("--tol-rel", tol_rel, "Relative eigenvalue cutoff for the Gram matrix")
      ->check(CLI::Range(1e-300, 0.999999));
    app->add_option("--r-max", r_max, "Maximum retained Gram rank (0 = N)")
      ->check(CLI::NonNegativeNumber);
    app->add_option("--max-iters", max_iters, "Subgradient iterations per arm")
      ->check(CLI::Range(1, 100000000));
    app->add_option("--step0", step0, "Initial subgradient step length")
      ->check(CLI::PositiveNumber);
    app->add_option("--tol-obj", tol_obj, "Relative stall tolerance of the solver")
      ->check(CLI::PositiveNumber);
    app->add_option("--clip", clip, "Propensity clamp for IPW")->check(CLI::Range(1e-12, 0.49));
  }

  PipelineOptions options() const
  {
    PipelineOptions o;
    o.bandwidth = bandwidth;
    o.lambda1 = lambda1;
    o.lambda2 = lambda2;
    o.ate_lambda1 = ate_lambda1;
    o.smoothing.quadrature_points = quad_points;
    o.tol_rel = tol_rel;
    o.r_max = r_max;
    o.max_iters = max_iters;
    o.step0 = step0;
    o.tol_obj = tol_obj;
    o.logistic.clip = clip;
    return o;
  }

  void echo(Pairs& out) const
  {
    out.emplace_back("bandwidth", opt_str(bandwidth));
    out.emplace_back("lambda1", opt_str(lambda1));
    out.emplace_back("lambda2", opt_str(lambda2));
    out.emplace_back("ate-lambda1", opt_str(ate_lambda1));
    out.emplace_back("quad-points", std::to_string(quad_points));
    out.emplace_back("tol-rel", fmt(tol_rel));
    out.emplace_back("r-max", std::to_string(r_max));
    out.emplace_back("max-iters", std::to_string(max_iters));
    out.emplace_back("step0", fmt(step0));
    out.emplace_back("tol-obj", fmt(tol_obj));
    out.emplace_back("clip", fmt(clip));
  }
};

struct DataFlags
{
  std::string data;
  std::string treatment;
  std::string outcome;
  std::vector<std::string> v_cols;
  std::vector<std::string> covariates;
  std::vector<std::string> binary;

  void add(CLI::App* app)
  {
    app->add_option("--data", data, "Input CSV with a header row")->required();
    app->add_option("--treatment", treatment, "Binary treatment column")->required();
    app->add_option("--outcome", outcome, "Outcome column")->required();
    app->add_option("--v-col,--v-cols", v_cols, "Conditioning column(s)")->required()->delimiter(',');
    app->add_option("--covariates", covariates, "Covariate columns")->delimiter(',');
    app->add_option("--binary", binary, "Covariates to treat as 0/1 indicators")->delimiter(',');
  }

  ObservationalDataset load() const
  {
    return load_csv(data, CsvSchema{treatment, outcome, v_cols, covariates, binary});
  }

  void echo(Pairs& out) const
  {
    out.emplace_back("data", data);
    out.emplace_back("treatment", treatment);
    out.emplace_back("outcome", outcome);
    out.emplace_back("v-cols", join(v_cols));
    out.emplace_back("covariates", join(covariates));
    out.emplace_back("binary", join(binary));
  }
};

void write_file(const std::string& path, const std::string& command, const Pairs& config,
                const std::string& body)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::IoError, "cannot write '" + path + "'");
  }
  out << "# cfb " << kVersion << " " << command << "\n";
  for (const auto& [k, v] : config) out << "# " << k << "=" << v << "\n";
  out << body;
  if (!out) {
    throw Error(ErrorKind::IoError, "write to '" + path + "' failed");
  }
}

std::uint64_t env_seed()
{
  if (const char* s = std::getenv("CFB_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidConfig, std::string("CFB_SEED is not an integer: ") + s);
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SimulateCmd
{
  std::vector<int> settings{1};
  long n = 100;
  int reps = 100;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> methods{"proposed"};
  std::vector<std::string> augment{"none"};
  int parallelism = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  int ise_grid = 100;
  std::string out;
  std::string curves_out;
  PipelineFlags pipeline;

  void add(CLI::App* app)
  {
    app->add_option("--setting", settings, "Simulation setting id(s) 1-4")
      ->delimiter(',')
      ->check(CLI::Range(1, 4));
    app->add_option("--n", n, "Sample size per replicate")->check(CLI::Range(2L, 1000000L));
    app->add_option("--reps", reps, "Monte Carlo replicates")->check(CLI::Range(2, 10000000));
    app->add_option("--seed", seed, "Base seed (falls back to CFB_SEED, then 0)");
    app->add_option("--methods", methods, "proposed, ate-rkhs, ipw, reg")->delimiter(',');
    app->add_option("--augment", augment, "none, lm, krr")->delimiter(',');
    app->add_option("--parallelism", parallelism, "Worker threads")->check(CLI::Range(1, 4096));
    app->add_option("--ise-grid", ise_grid, "Evaluation grid points for the ISE")
      ->check(CLI::Range(2, 1000000));
    app->add_option("--out", out, "Metrics CSV path")->required();
    app->add_option("--curves-out", curves_out, "Optional per-replicate curves CSV");
    pipeline.add(app);
  }

  int execute() const
  {
    StudyConfig cfg;
    cfg.settings = settings;
    cfg.n = n;
    cfg.reps = reps;
    cfg.seed = seed ? *seed : env_seed();
    cfg.methods.clear();
    for (const auto& m : methods) cfg.methods.push_back(parse_method(m));
    cfg.augmentations.clear();
    for (const auto& a : augment) cfg.augmentations.push_back(parse_augmentation(a));
    cfg.parallelism = parallelism;
    cfg.pipeline = pipeline.options();
    cfg.pipeline.grid.points = ise_grid;

    Pairs echo;
    std::vector<std::string> setting_str;
    for (int s : settings) setting_str.push_back(std::to_string(s));
    echo.emplace_back("setting", join(setting_str));
    echo.emplace_back("n", std::to_string(n));
    echo.emplace_back("reps", std::to_string(reps));
    echo.emplace_back("seed", std::to_string(cfg.seed));
    echo.emplace_back("methods", join(methods));
    echo.emplace_back("augment", join(augment));
    echo.emplace_back("parallelism", std::to_string(parallelism));
    echo.emplace_back("ise-grid", std::to_string(ise_grid));
    pipeline.echo(echo);

    const auto result = run_study(cfg, !curves_out.empty());

    std::ostringstream body;
    body << "setting,method,augmentation,aise,aise_se,meise,n_reps,n_effective\n";
    for (const auto& r : result.rows) {
      body << r.setting << ',' << to_string(r.method) << ',' << to_string(r.augmentation) << ','
           << fmt(r.aise) << ',' << fmt(r.aise_se) << ',' << fmt(r.meise) << ',' << r.n_reps
           << ',' << r.n_effective << '\n';
    }
    write_file(out, "simulate", echo, body.str());

    if (!curves_out.empty()) {
      std::ostringstream cb;
      cb << "setting,replicate,method,augmentation,v,estimate\n";
      for (const auto& rc : result.curves) {
        for (Eigen::Index g = 0; g < rc.curve.grid.size(); ++g) {
          cb << rc.setting << ',' << rc.replicate << ',' << to_string(rc.curve.method) << ','
             << to_string(rc.curve.augmentation) << ',' << fmt(rc.curve.grid(g)) << ','
             << fmt(rc.curve.estimate(g)) << '\n';
        }
      }
      write_file(curves_out, "simulate", echo, cb.str());
    }
    for (const auto& f : result.failures) std::cerr << "warning: replicate failed: " << f << "\n";
    return 0;
  }
};

struct EstimateCmd
{
  DataFlags data;
  std::string method = "proposed";
  std::string augment = "none";
  std::optional<double> grid_min;
  std::optional<double> grid_max;
  int grid_points = 100;
  std::string out;
  PipelineFlags pipeline;

  void add(CLI::App* app)
  {
    data.add(app);
    app->add_option("--method", method, "proposed, ate-rkhs, ipw, reg");
    app->add_option("--augment", augment, "none, lm, krr");
    app->add_option("--grid-min", grid_min, "Lowest grid node (original units)");
    app->add_option("--grid-max", grid_max, "Highest grid node (original units)");
    app->add_option("--grid-points", grid_points, "Grid size")->check(CLI::Range(1, 10000000));
    app->add_option("--out", out, "Curve CSV path")->required();
    pipeline.add(app);
  }

  int execute() const
  {
    if (grid_min.has_value() != grid_max.has_value()) {
      throw Error(ErrorKind::InvalidConfig, "--grid-min and --grid-max must be given together");
    }
    const auto request = CurveRequest{parse_method(method), parse_augmentation(augment)};
    auto opts = pipeline.options();
    opts.grid.min = grid_min;
    opts.grid.max = grid_max;
    opts.grid.points = grid_points;

    Pairs echo;
    data.echo(echo);
    echo.emplace_back("method", method);
    echo.emplace_back("augment", augment);
    echo.emplace_back("grid-min", opt_str(grid_min));
    echo.emplace_back("grid-max", opt_str(grid_max));
    echo.emplace_back("grid-points", std::to_string(grid_points));
    pipeline.echo(echo);

    const auto ds = data.load();
    const auto result = run_pipeline(ds, {request}, opts);
    if (result.ipw && result.ipw->degenerate) {
      std::cerr << "warning: PropensityDegenerate: " << fmt(100.0 * result.ipw->clipped_fraction)
                << "% of propensities clamped\n";
    }
    std::cerr << "# h=" << fmt(result.h) << " lambda1=" << fmt(result.lambda1)
              << " lambda2=" << fmt(result.lambda2) << "\n";

    const auto& c = result.curves.front();
    std::ostringstream body;
    body << "v,estimate\n";
    for (Eigen::Index g = 0; g < c.grid.size(); ++g) {
      body << fmt(c.grid(g)) << ',' << fmt(c.estimate(g)) << '\n';
    }
    write_file(out, "estimate", echo, body.str());
    return 0;
  }
};

struct WeightsCmd
{
  DataFlags data;
  std::string out;
  PipelineFlags pipeline;

  void add(CLI::App* app)
  {
    data.add(app);
    app->add_option("--out", out, "Weights CSV path")->required();
    pipeline.add(app);
  }

  int execute() const
  {
    Pairs echo;
    data.echo(echo);
    pipeline.echo(echo);

    const auto ds = data.load();
    const auto result = solve_pipeline_weights(ds, pipeline.options());
    const auto& w = *result.proposed_weights;

    std::cerr << "# h=" << fmt(result.h) << " lambda1=" << fmt(result.lambda1)
              << " lambda2=" << fmt(result.lambda2) << " rank=" << result.rank << "\n";
    for (const auto& [name, bw] : {std::pair{"treated", &w.treated}, std::pair{"control", &w.control}}) {
      std::cerr << "# arm=" << name << " iterations=" << bw->iterations
                << " converged=" << (bw->converged ? "true" : "false")
                << " objective=" << fmt(bw->objective) << " eigengap=" << fmt(bw->final_eigengap)
                << "\n";
    }

    std::ostringstream body;
    body << "index,arm,weight\n";
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      const bool treated = ds.T(i) > 0.5;
      body << i << ',' << (treated ? "treated" : "control") << ','
           << fmt(treated ? w.treated.w(i) : w.control.w(i)) << '\n';
    }
    write_file(out, "weights", echo, body.str());
    return 0;
  }
};

} // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::InvalidConfig, "cannot read config file '" + path + "'");
  }
  Pairs out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidConfig,
                  "config line " + std::to_string(lineno) + " is not key=value");
    }
    auto key = trim(t.substr(0, eq));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    out.emplace_back(key, trim(t.substr(eq + 1)));
  }
  return out;
}

std::vector<std::string> merge_config(const std::vector<std::string>& args)
{
  std::vector<std::string> rest;
  std::optional<std::string> config_path;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config") {
      if (k + 1 >= args.size()) {
        throw Error(ErrorKind::InvalidConfig, "--config needs a path");
      }
      config_path = args[++k];
    } else if (args[k].rfind("--config=", 0) == 0) {
      config_path = args[k].substr(9);
    } else {
      rest.push_back(args[k]);
    }
  }
  if (!config_path) return rest;

  std::set<std::string> given;
  for (const auto& a : rest) {
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') - 2));
  }
  std::vector<std::string> injected;
  for (const auto& [key, value] : read_config_file(*config_path)) {
    if (given.count(key)) continue;
    injected.push_back("--" + key);
    injected.push_back(value);
  }
  // Options belong to the subcommand, so they go after its name.
  std::vector<std::string> out;
  if (!rest.empty() && rest.front().rfind("-", 0) != 0) {
    out.push_back(rest.front());
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), rest.begin() + 1, rest.end());
  } else {
    out = injected;
    out.insert(out.end(), rest.begin(), rest.end());
  }
  return out;
}

int run(int argc, char** argv)
{
  CLI::App app{"Covariate-function balancing estimates of conditional treatment effect curves"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.allow_config_extras(false);

  SimulateCmd simulate;
  EstimateCmd estimate;
  WeightsCmd weights;
  auto* sim_app = app.add_subcommand("simulate", "Monte Carlo study over the synthetic settings");
  auto* est_app = app.add_subcommand("estimate", "Estimate an effect curve from a CSV file");
  auto* w_app = app.add_subcommand("weights", "Solve and export balancing weights");
  simulate.add(sim_app);
  estimate.add(est_app);
  weights.add(w_app);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_config(args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (sim_app->parsed()) return simulate.execute();
    if (est_app->parsed()) return estimate.execute();
    if (w_app->parsed()) return weights.execute();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_usage_error() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

} // namespace cfb::cli
