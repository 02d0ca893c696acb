#include "cfb/balancing.hpp"
#include "cfb/error.hpp"
#include "generators.hpp"

#include <doctest.h>

#include <cmath>

using namespace cfb;
using cfb::testing::Gen;
using cfb::testing::Instance;
using cfb::testing::random_instance;

namespace {

GramFactorization scalar_gram(double d)
{
  GramFactorization g;
  g.P = Eigen::MatrixXd::Ones(1, 1);
  g.D = Eigen::VectorXd::Constant(1, d);
  g.rank = 1;
  return g;
}

//! Central finite-difference gradient over the active coordinates.
Eigen::VectorXd fd_gradient(const BalancingProblem& p, const Eigen::VectorXd& w, double step)
{
  Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (p.active()(i) < 0.5) continue;
    Eigen::VectorXd up = w, dn = w;
    up(i) += step;
    dn(i) -= step;
    g(i) = (p.objective(up) - p.objective(dn)) / (2.0 * step);
  }
  return g;
}

} // namespace

TEST_CASE("objective reduces to the penalty shift when y = 0")
{
  Gen gen(1);
  const Eigen::Index n = 8;
  const Eigen::MatrixXd X = gen.uniform_matrix(n, 1);
  const auto gram = truncated_eig(gram_matrix(X, ReproducingKernelSpec{{KernelKind::Sobolev2}}));
  const auto G = compute_Gh(SmoothingContext(X, 0.2));
  const double lambda1 = 0.05;
  const BalancingProblem p(gram, G, Eigen::VectorXd::Ones(n), Arm::Treated, lambda1, 0.0);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  CHECK(p.y(w).norm() == 0.0);
  CHECK(p.objective(w) == doctest::Approx(-static_cast<double>(n) * lambda1 / gram.D.maxCoeff()).epsilon(1e-12));
}

TEST_CASE("single treated sample: objective is quadratic in the weight")
{
  const double d1 = 0.7, lambda1 = 0.3, lambda2 = 0.2;
  const BalancingProblem p(scalar_gram(d1), Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1), Arm::Treated,
                           lambda1, lambda2);
  for (double c : {1.0, 1.5, 2.0, 3.7}) {
    const double expected = (c - 1.0) * (c - 1.0) - lambda1 / d1 + lambda2 * c * c;
    CHECK(p.objective(Eigen::VectorXd::Constant(1, c)) == doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("problem construction validates shapes")
{
  const Eigen::MatrixXd G = Eigen::MatrixXd::Ones(2, 2);
  CHECK_THROWS_AS(BalancingProblem(scalar_gram(1.0), G, Eigen::Vector2d(1, 0), Arm::Treated, 0.1, 0.1), Error);
  GramFactorization g2;
  g2.P = Eigen::MatrixXd::Identity(2, 2);
  g2.D = Eigen::Vector2d(1, 1);
  g2.rank = 2;
  CHECK_THROWS_AS(BalancingProblem(g2, G, Eigen::Vector2d(0, 0), Arm::Treated, 0.1, 0.1), Error);
}

TEST_CASE("property: convexity along random segments")
{
  Gen gen(2);
  for (int inst_k = 0; inst_k < 3; ++inst_k) {
    const Instance inst = random_instance(gen, gen.integer(6, 16));
    const auto p = inst.problem(inst_k % 2 == 0 ? Arm::Treated : Arm::Control);
    for (int k = 0; k < 40; ++k) {
      const Eigen::VectorXd w1 = gen.feasible_weights(p.active());
      const Eigen::VectorXd w2 = gen.feasible_weights(p.active());
      const double t = gen.uniform();
      const double lhs = p.objective(t * w1 + (1.0 - t) * w2);
      CHECK(lhs <= t * p.objective(w1) + (1.0 - t) * p.objective(w2) + 1e-8);
    }
  }
}

TEST_CASE("property: subgradient matches finite differences away from ties")
{
  Gen gen(3);
  int checked = 0;
  for (int attempt = 0; attempt < 60 && checked < 8; ++attempt) {
    const Instance inst = random_instance(gen, gen.integer(6, 14));
    const auto p = inst.problem();
    const Eigen::VectorXd w = gen.feasible_weights(p.active()).array() + 0.01;
    Eigen::VectorXd g;
    SpectralPoint sp;
    p.evaluate(w, g, sp);
    if (sp.gap() <= 1e-3) continue;
    ++checked;
    const Eigen::VectorXd fd = fd_gradient(p, w, 1e-6);
    const double scale = g.cwiseAbs().maxCoeff();
    CHECK((fd - g).cwiseAbs().maxCoeff() / scale < 1e-4);
  }
  CHECK(checked == 8);
}

TEST_CASE("property: subgradient inequality")
{
  Gen gen(4);
  for (int inst_k = 0; inst_k < 3; ++inst_k) {
    const Instance inst = random_instance(gen, gen.integer(6, 16));
    const auto p = inst.problem();
    for (int k = 0; k < 40; ++k) {
      const Eigen::VectorXd w = gen.feasible_weights(p.active());
      const Eigen::VectorXd w2 = gen.feasible_weights(p.active());
      CHECK(p.objective(w2) >= p.objective(w) + p.subgradient(w).dot(w2 - w) - 1e-8);
    }
  }
}

TEST_CASE("subgradient structure")
{
  Gen gen(5);
  const Instance inst = random_instance(gen, 12);
  const auto p = inst.problem();
  const Eigen::VectorXd w = gen.feasible_weights(p.active());
  const Eigen::VectorXd g = p.subgradient(w);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (p.active()(i) < 0.5) CHECK(g(i) == 0.0);
  }

  SUBCASE("isotropic penalty: lambda1 does not move the subgradient")
  {
    GramFactorization iso = inst.gram;
    iso.D.setOnes();
    const BalancingProblem a(iso, inst.G, inst.T, Arm::Treated, 0.01, inst.lambda2);
    const BalancingProblem b(iso, inst.G, inst.T, Arm::Treated, 0.37, inst.lambda2);
    const Eigen::VectorXd ga = a.subgradient(w);
    const Eigen::VectorXd gb = b.subgradient(w);
    CHECK((ga - gb).cwiseAbs().maxCoeff() <= 1e-12 * ga.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("solve_weights")
{
  Gen gen(6);
  const Instance inst = random_instance(gen, 30);
  BalancingConfig cfg;
  cfg.lambda1 = inst.lambda1;
  cfg.lambda2 = inst.lambda2;
  cfg.max_iters = 300;

  const auto p = inst.problem();
  const auto res = solve_weights(p, cfg);
  CHECK(p.feasible(res.w));
  CHECK(res.objective <= p.objective(Eigen::VectorXd::Ones(30)));
  CHECK(res.objective == doctest::Approx(p.objective(res.w)).epsilon(1e-12));
  for (Eigen::Index i = 0; i < res.w.size(); ++i) {
    if (inst.T(i) < 0.5) CHECK(res.w(i) == 1.0);
  }

  SUBCASE("control arm equals treated arm on flipped treatment")
  {
    cfg.arm = Arm::Control;
    const auto ctrl = solve_weights(inst.problem(Arm::Control), cfg);
    const Eigen::VectorXd flipped = (1.0 - inst.T.array()).matrix();
    cfg.arm = Arm::Treated;
    const auto flip = solve_weights(BalancingProblem(inst.gram, inst.G, flipped, Arm::Treated, inst.lambda1,
                                                     inst.lambda2),
                                    cfg);
    CHECK(ctrl.w == flip.w);
    CHECK(ctrl.objective_trace == flip.objective_trace);
  }

  SUBCASE("invalid configuration")
  {
    cfg.lambda2 = 0.0;
    CHECK_THROWS_AS(solve_weights(p, cfg), Error);
  }
}

TEST_CASE("defaults follow log N scaling")
{
  const auto c = BalancingConfig::defaults(100, 0.1, 1, Arm::Control);
  CHECK(c.arm == Arm::Control);
  CHECK(c.lambda1 == doctest::Approx(std::log(100.0) / (100.0 * 0.1)));
  CHECK(c.lambda2 == doctest::Approx(kLambda2Scale * std::log(100.0) / 100.0));
  const auto c2 = BalancingConfig::defaults(100, 0.1, 2, Arm::Treated);
  CHECK(c2.lambda1 == doctest::Approx(10.0 * c.lambda1));
  const auto m = BalancingConfig::marginal_defaults(100, Arm::Treated);
  CHECK(m.lambda1 == doctest::Approx(std::log(100.0) / 100.0));
  CHECK(m.lambda2 == c.lambda2);
}

TEST_CASE("balancing error S")
{
  Gen gen(7);
  SUBCASE("zero residual or zero u gives zero")
  {
    const Eigen::Index n = 6;
    const SmoothingContext ctx(gen.uniform_vector(n), 0.2);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd u = gen.normal_vector(n);
    CHECK(balancing_error_S_quadrature(ones, u, ones, ctx) == 0.0);
    const Eigen::VectorXd w = gen.feasible_weights(ones);
    CHECK(balancing_error_S_quadrature(w, Eigen::VectorXd::Zero(n), ones, ctx) == 0.0);
  }

  SUBCASE("property: quadrature and matrix paths agree")
  {
    for (int k = 0; k < 10; ++k) {
      const Eigen::Index n = gen.integer(2, 10);
      const Eigen::MatrixXd X = gen.uniform_matrix(n, 2);
      const SmoothingContext ctx(X.col(0), gen.uniform(0.05, 0.4));
      const auto G = compute_Gh(ctx);
      const Eigen::VectorXd T = gen.treatment(n);
      const Eigen::VectorXd w = gen.feasible_weights(T);
      const Eigen::VectorXd coef = gen.normal_vector(n);
      const Eigen::VectorXd u = gram_matrix(X, ReproducingKernelSpec{{KernelKind::Sobolev2, KernelKind::Sobolev2}}) * coef;
      const double a = balancing_error_S_quadrature(w, u, T, ctx);
      const double b = balancing_error_S_matrix(w, u, T, G);
      CHECK(std::abs(a - b) <= 1e-8 * std::max(1.0, std::abs(a)));
    }
  }

  SUBCASE("all-ones G gives the marginal balance criterion")
  {
    const Eigen::Index n = 9;
    const Eigen::VectorXd T = gen.treatment(n);
    const Eigen::VectorXd w = gen.feasible_weights(T);
    const Eigen::VectorXd u = gen.normal_vector(n);
    double m = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) m += (T(i) * w(i) - 1.0) * u(i) / static_cast<double>(n);
    CHECK(balancing_error_S_matrix(w, u, T, marginal_gram(n)) == doctest::Approx(m * m).epsilon(1e-13));
  }
}

TEST_CASE("inner supremum")
{
  SUBCASE("diagonal (2, 1)")
  {
    const Eigen::Matrix2d B = Eigen::Vector2d(2.0, 1.0).asDiagonal();
    const auto rep = verify_inner_sup(B, 200, 1);
    CHECK(rep.sigma1 == doctest::Approx(2.0));
    CHECK(rep.bound_holds);
    CHECK(rep.attained);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    CHECK(std::abs(es.eigenvectors().col(1)(0)) == doctest::Approx(1.0));
  }

  SUBCASE("property: random 5x5 matrices")
  {
    Gen gen(8);
    for (int k = 0; k < 10; ++k) {
      Eigen::MatrixXd A = Eigen::MatrixXd::NullaryExpr(5, 5, [&] { return gen.normal(); });
      const Eigen::MatrixXd B = 0.5 * (A + A.transpose());
      const auto rep = verify_inner_sup(B, 1000, 100 + k);
      CHECK(rep.bound_holds);
      CHECK(rep.attained);
      CHECK(rep.max_sampled <= rep.sigma1 + 1e-10);
    }
  }

  SUBCASE("at a solver iterate")
  {
    Gen gen(9);
    const Instance inst = random_instance(gen, 15);
    const auto p = inst.problem();
    const auto rep = verify_inner_sup(gen.feasible_weights(p.active()), p, 1000, 3);
    CHECK(rep.bound_holds);
    CHECK(rep.attained);
  }
}
