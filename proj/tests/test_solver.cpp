#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "uot/solver.hpp"

#include <cmath>
#include <random>

using namespace uot;
using namespace uot::testutil;

namespace {

CostMatrix cost_from(Matrix values) {
  return {std::move(values), Metric::CosineDistance};
}

SolverConfig make_cfg(double eps, double l1, double l2, bool log_domain = true,
                      int max_iters = 20000, double tol = 1e-9) {
  SolverConfig cfg;
  cfg.epsilon = eps;
  cfg.lambda1 = l1;
  cfg.lambda2 = l2;
  cfg.log_domain = log_domain;
  cfg.max_iters = max_iters;
  cfg.tolerance = tol;
  return cfg;
}

}  // namespace

TEST_CASE("gibbs_kernel closed forms") {
  Matrix c(2, 2);
  c << 0.0, 1.0, 1.0, 0.0;
  const Matrix k = gibbs_kernel(cost_from(c), 0.5);
  CHECK(k(0, 0) == 1.0);
  CHECK(k(1, 1) == 1.0);
  CHECK(k(0, 1) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
  CHECK(k(1, 0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));

  Matrix c2(1, 1);
  c2 << 0.3;
  CHECK(gibbs_kernel(cost_from(c2), 0.3)(0, 0) ==
        doctest::Approx(0.36787944117144233).epsilon(1e-15));
  CHECK_THROWS_AS(gibbs_kernel(cost_from(c2), 0.0), ConfigError);
  CHECK_THROWS_AS(gibbs_kernel(cost_from(c2), -1.0), ConfigError);
}

TEST_CASE("generalized_kl identities and hand values") {
  Vector a(2), b(2);
  a << 0.4, 0.6;
  b << 0.4, 0.6;
  CHECK(generalized_kl(a, b) == doctest::Approx(0.0).epsilon(1e-15));

  // a = 2b: sum b_i (2 log 2 - 1)
  Vector b2(3);
  b2 << 0.2, 0.5, 0.1;
  const Vector a2 = 2.0 * b2;
  CHECK(generalized_kl(a2, b2) ==
        doctest::Approx(b2.sum() * (2.0 * std::log(2.0) - 1.0)).epsilon(1e-12));

  // direct formula evaluation
  Vector a3(2), b3(2);
  a3 << 0.2, 0.3;
  b3 << 0.25, 0.25;
  const double expect = 0.2 * std::log(0.2 / 0.25) - 0.2 + 0.25 +
                        0.3 * std::log(0.3 / 0.25) - 0.3 + 0.25;
  CHECK(generalized_kl(a3, b3) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(generalized_kl(a3, b3) == doctest::Approx(0.01006775677546243).epsilon(1e-10));
  CHECK(generalized_kl(a3, b3) >= 0.0);

  // 0 log 0 = 0
  Vector a4(2);
  a4 << 0.0, 1.0;
  Vector b4(2);
  b4 << 0.5, 1.0;
  CHECK(generalized_kl(a4, b4) == doctest::Approx(0.5).epsilon(1e-14));

  Vector neg(2);
  neg << -0.1, 0.2;
  CHECK_THROWS_AS(generalized_kl(neg, b4), DomainError);
  Vector zb(2);
  zb << 0.0, 1.0;
  CHECK_THROWS_AS(generalized_kl(a4, zb), DomainError);
  Vector short_b(1);
  short_b << 1.0;
  CHECK_THROWS_AS(generalized_kl(a4, short_b), ShapeError);
}

TEST_CASE("marginals hand sums") {
  Matrix g(2, 2);
  g << 0.5, 0.0, 0.0, 0.5;
  auto [row, col] = marginals(g);
  CHECK(row(0) == 0.5);
  CHECK(row(1) == 0.5);
  CHECK(col(0) == 0.5);
  CHECK(col(1) == 0.5);

  auto [zr, zc] = marginals(Matrix::Zero(3, 2));
  CHECK(zr.sum() == 0.0);
  CHECK(zc.sum() == 0.0);

  Matrix g2(2, 2);
  g2 << 0.1, 0.2, 0.3, 0.4;
  auto [r2, c2] = marginals(g2);
  CHECK(r2(0) == doctest::Approx(0.3));
  CHECK(r2(1) == doctest::Approx(0.7));
  CHECK(c2(0) == doctest::Approx(0.4));
  CHECK(c2(1) == doctest::Approx(0.6));
  CHECK(std::abs(r2.sum() - c2.sum()) <= 1e-12 * r2.sum());
}

TEST_CASE("objective conventions") {
  const Measure w = Measure::uniform(2);
  const Measure v = Measure::uniform(2);
  Matrix c(2, 2);
  c << 0.1, 0.2, 0.3, 0.4;
  const SolverConfig cfg = make_cfg(0.5, 1.5, 2.5);

  // zero plan: kl terms collapse to the target masses
  const ObjectiveBreakdown zero = objective(Matrix::Zero(2, 2), cost_from(c), w, v, cfg);
  CHECK(zero.transport_cost == 0.0);
  CHECK(zero.kl_row == doctest::Approx(1.0));
  CHECK(zero.kl_col == doctest::Approx(1.0));
  CHECK(zero.neg_entropy == 0.0);
  CHECK(zero.total == doctest::Approx(1.5 + 2.5));

  // single unit entry
  Matrix g1(1, 1);
  g1 << 1.0;
  Matrix c1(1, 1);
  c1 << 0.5;
  const ObjectiveBreakdown one =
      objective(g1, cost_from(c1), Measure::uniform(1), Measure::uniform(1), cfg);
  CHECK(one.transport_cost == doctest::Approx(0.5));
  CHECK(one.kl_row == doctest::Approx(0.0));
  CHECK(one.kl_col == doctest::Approx(0.0));
  CHECK(one.neg_entropy == doctest::Approx(-1.0));
  CHECK(one.entropy_plain == doctest::Approx(0.0));
  CHECK(one.total == doctest::Approx(0.5 + 0.5 * (-1.0)));
}

TEST_CASE("objective total equals its parts on solver output") {
  std::mt19937_64 rng(100);
  const CostMatrix c = random_cosine_cost(rng, 6, 4, 5);
  const SolverConfig cfg = make_cfg(0.1, 0.7, 1.3);
  const TransportPlan plan = solve_uot(c, Measure::uniform(6), Measure::uniform(4), cfg);
  const ObjectiveBreakdown& o = plan.objective;
  const double recompute = o.transport_cost + o.lambda1 * o.kl_row + o.lambda2 * o.kl_col +
                           o.epsilon * o.neg_entropy;
  CHECK(o.total == doctest::Approx(recompute).epsilon(1e-9));
}

TEST_CASE("free matching: lambda = 0 returns the Gibbs kernel bitwise") {
  std::mt19937_64 rng(101);
  for (bool log_domain : {false, true}) {
    const CostMatrix c = random_cosine_cost(rng, 5, 3, 4);
    const SolverConfig cfg = make_cfg(0.05, 0.0, 0.0, log_domain);
    const TransportPlan plan = solve_uot(c, Measure::uniform(5), Measure::uniform(3), cfg);
    const Matrix k = gibbs_kernel(c, cfg.epsilon);
    REQUIRE(plan.gamma.rows() == k.rows());
    for (Index i = 0; i < k.rows(); ++i) {
      for (Index j = 0; j < k.cols(); ++j) {
        CHECK(plan.gamma(i, j) == k(i, j));  // exact, no tolerance
      }
    }
    CHECK(plan.converged);
    CHECK(plan.iterations == 1);
    CHECK(plan.residual == 0.0);
  }
}

TEST_CASE("constant cost with uniform marginals gives a symmetric plan") {
  const Index m = 2, n = 3;
  const Measure w = Measure::uniform(m);
  const Measure v = Measure::uniform(n);
  const double eps = 0.05;

  // With c = eps log(mn) the stationary point is exactly the outer product.
  const double c_exact = eps * std::log(double(m * n));
  const SolverConfig cfg = make_cfg(eps, 10.0, 10.0);
  const TransportPlan plan =
      solve_uot(cost_from(Matrix::Constant(m, n, c_exact)), w, v, cfg);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      CHECK(std::abs(plan.gamma(i, j) - w.weights(i) * v.weights(j)) < 1e-6);
    }
  }

  // Generic constant cost: entries all equal, mass given by the closed form
  // log g = -(c + (l1+l2) log(mn)) / (l1 + l2 + eps).
  const double c_any = 0.37;
  const TransportPlan plan2 =
      solve_uot(cost_from(Matrix::Constant(m, n, c_any)), w, v, cfg);
  const double spread = plan2.gamma.maxCoeff() - plan2.gamma.minCoeff();
  CHECK(spread < 1e-12);
  const double log_pred =
      -(c_any + (cfg.lambda1 + cfg.lambda2) * std::log(double(m * n))) /
      (cfg.lambda1 + cfg.lambda2 + cfg.epsilon);
  CHECK(std::log(plan2.gamma(0, 0)) == doctest::Approx(log_pred).epsilon(1e-6));
}

TEST_CASE("diagonal cost concentrates mass on the diagonal") {
  Matrix c(2, 2);
  c << 0.0, 1.0, 1.0, 0.0;
  Vector half(2);
  half << 0.5, 0.5;
  const Measure w = Measure::from_weights(half, false);
  const Measure v = Measure::from_weights(half, false);
  const SolverConfig cfg = make_cfg(0.05, 10.0, 10.0);
  const TransportPlan plan = solve_uot(cost_from(c), w, v, cfg);
  CHECK(plan.gamma(0, 0) == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(plan.gamma(1, 1) == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(plan.gamma(0, 1) < 1e-4);
  CHECK(plan.gamma(1, 0) < 1e-4);

  const OracleResult oracle = oracle_solve_uot(cost_from(c), w, v, cfg);
  CHECK(plan.objective.total <= oracle.total + 1e-4);
  CHECK((plan.gamma - oracle.gamma).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("factorization and fixed point hold on random instances") {
  std::mt19937_64 rng(102);
  for (bool log_domain : {false, true}) {
    for (int rep = 0; rep < 10; ++rep) {
      const CostMatrix c = random_cosine_cost(rng, 7, 4, 6);
      const SolverConfig cfg = make_cfg(0.05, 0.5, 1.0, log_domain, 20000, 1e-8);
      const Measure w = Measure::uniform(7);
      const Measure v = Measure::uniform(4);
      const TransportPlan plan = solve_uot(c, w, v, cfg);
      REQUIRE(plan.converged);
      CHECK(plan.gamma.minCoeff() >= 0.0);
      if (log_domain) {
        CHECK(plan.gamma.minCoeff() > 0.0);
      }
      CHECK(factorization_error(plan, c, cfg.epsilon) < 1e-8);
      CHECK(fixed_point_residual(plan, c, w, v, cfg) < 10.0 * cfg.tolerance);
    }
  }
}

TEST_CASE("log-domain and linear plans agree") {
  std::mt19937_64 rng(103);
  const CostMatrix c = random_cosine_cost(rng, 6, 5, 4);
  const Measure w = Measure::uniform(6);
  const Measure v = Measure::uniform(5);
  const TransportPlan lin = solve_uot(c, w, v, make_cfg(0.1, 0.8, 1.7, false));
  const TransportPlan lg = solve_uot(c, w, v, make_cfg(0.1, 0.8, 1.7, true));
  CHECK((lin.gamma - lg.gamma).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("solve_uot rejects bad shapes and configs") {
  Matrix c(2, 2);
  c << 0.0, 1.0, 1.0, 0.0;
  CHECK_THROWS_AS(
      solve_uot(cost_from(c), Measure::uniform(3), Measure::uniform(2), make_cfg(0.1, 1, 1)),
      ShapeError);
  SolverConfig bad = make_cfg(0.1, 1, 1);
  bad.max_iters = 0;
  CHECK_THROWS_AS(solve_uot(cost_from(c), Measure::uniform(2), Measure::uniform(2), bad),
                  ConfigError);
}

TEST_CASE("linear mode overflows on an extreme instance, log mode survives") {
  // Squared-euclidean costs large enough that the kernel underflows to zero.
  Matrix h(3, 2), l(2, 2);
  h << 0.0, 0.0, 8.0, 0.0, 0.0, 8.0;
  l << 30.0, 30.0, -30.0, 30.0;
  const CostMatrix c = cost_matrix(FeatureSequence{h, Side::Acoustic},
                                   FeatureSequence{l, Side::Linguistic},
                                   Metric::SquaredEuclidean);
  const Measure w = Measure::uniform(3);
  const Measure v = Measure::uniform(2);
  CHECK_THROWS_AS(solve_uot(c, w, v, make_cfg(0.01, 1.0, 1.0, false)), SolverError);
  const TransportPlan plan = solve_uot(c, w, v, make_cfg(0.01, 1.0, 1.0, true));
  CHECK(plan.converged);
}

TEST_CASE("solve_balanced basics") {
  Matrix c1(1, 1);
  c1 << 0.4;
  const TransportPlan unit =
      solve_balanced(cost_from(c1), Measure::uniform(1), Measure::uniform(1), 0.1);
  CHECK(unit.gamma(0, 0) == doctest::Approx(1.0).epsilon(1e-9));

  // constant cost, uniform marginals: outer product
  const TransportPlan flat = solve_balanced(cost_from(Matrix::Constant(3, 3, 0.8)),
                                            Measure::uniform(3), Measure::uniform(3), 0.1);
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) {
      CHECK(flat.gamma(i, j) == doctest::Approx(1.0 / 9.0).epsilon(1e-9));
    }
  }

  Vector unequal(2);
  unequal << 0.6, 0.6;
  CHECK_THROWS_AS(solve_balanced(cost_from(Matrix::Constant(2, 2, 0.1)),
                                 Measure::from_weights(unequal), Measure::uniform(2), 0.1),
                  InfeasibilityError);
}

TEST_CASE("solve_balanced drives marginal residual below 1e-8") {
  std::mt19937_64 rng(104);
  for (bool log_domain : {false, true}) {
    const CostMatrix c = random_cosine_cost(rng, 4, 3, 4);
    const TransportPlan plan = solve_balanced(c, Measure::uniform(4), Measure::uniform(3),
                                              0.1, 50000, 1e-9, log_domain);
    REQUIRE(plan.converged);
    auto [row, col] = marginals(plan.gamma);
    CHECK((row - Measure::uniform(4).weights).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((col - Measure::uniform(3).weights).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("balanced limit: large lambda reproduces balanced Sinkhorn") {
  // The intrinsic marginal gap of the lambda = 10 fixed point scales with the
  // per-atom weight, so the 1e-3 sup-norm bound needs small weights (large m, n).
  std::mt19937_64 rng(105);
  const Index m = 60, n = 50;
  const CostMatrix c = random_cosine_cost(rng, m, n, 16);
  const Measure w = Measure::uniform(m);
  const Measure v = Measure::uniform(n);
  const TransportPlan uot_plan =
      solve_uot(c, w, v, make_cfg(0.05, 10.0, 10.0, false, 50000, 1e-9));
  REQUIRE(uot_plan.converged);
  auto [row, col] = marginals(uot_plan.gamma);
  CHECK((row - w.weights).cwiseAbs().maxCoeff() < 1e-3);
  CHECK((col - v.weights).cwiseAbs().maxCoeff() < 1e-3);

  const TransportPlan bal = solve_balanced(c, w, v, 0.05, 50000, 1e-10, false);
  REQUIRE(bal.converged);
  CHECK((uot_plan.gamma - bal.gamma).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("epsilon to infinity approaches the outer product") {
  std::mt19937_64 rng(106);
  const CostMatrix c = random_cosine_cost(rng, 5, 5, 4);
  const Measure w = Measure::uniform(5);
  const Measure v = Measure::uniform(5);
  const TransportPlan plan = solve_balanced(c, w, v, 100.0, 20000, 1e-10, true);
  const Matrix outer = w.weights * v.weights.transpose();
  CHECK((plan.gamma - outer).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("increasing lambda2 weakly decreases kl_col") {
  std::mt19937_64 rng(107);
  const double lambdas[] = {0.1, 0.5, 1.0, 5.0, 10.0};
  int violations = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const CostMatrix c = random_cosine_cost(rng, 10, 4, 6);
    const Measure w = Measure::uniform(10);
    const Measure v = Measure::uniform(4);
    double prev = std::numeric_limits<double>::infinity();
    for (double l2 : lambdas) {
      const SolverConfig cfg = make_cfg(0.05, 0.5, l2, true, 20000, 1e-9);
      const TransportPlan plan = solve_uot(c, w, v, cfg);
      REQUIRE(plan.converged);
      if (plan.objective.kl_col > prev + 1e-6) {
        ++violations;
      }
      prev = plan.objective.kl_col;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("oracle: free matching recovers the kernel") {
  std::mt19937_64 rng(108);
  const CostMatrix c = random_cosine_cost(rng, 3, 2, 4);
  const SolverConfig cfg = make_cfg(0.5, 0.0, 0.0);
  const OracleResult oracle = oracle_solve_uot(c, Measure::uniform(3), Measure::uniform(2), cfg);
  const Matrix k = gibbs_kernel(c, cfg.epsilon);
  CHECK((oracle.gamma - k).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(oracle.start_spread < 1e-6);
}

TEST_CASE("oracle: 1x1 with large penalties pins the mass") {
  Matrix c(1, 1);
  c << 0.2;
  const SolverConfig cfg = make_cfg(0.05, 50.0, 50.0);
  const OracleResult oracle =
      oracle_solve_uot(cost_from(c), Measure::uniform(1), Measure::uniform(1), cfg);
  CHECK(oracle.gamma(0, 0) == doctest::Approx(1.0).epsilon(5e-3));
}

TEST_CASE("oracle rejects large instances") {
  const CostMatrix c = cost_from(Matrix::Zero(4, 4));
  CHECK_THROWS_AS(
      oracle_solve_uot(c, Measure::uniform(4), Measure::uniform(4), make_cfg(0.1, 1, 1)),
      SizeError);
}

TEST_CASE("solver matches the oracle objective on random tiny instances") {
  std::mt19937_64 rng(109);
  for (int rep = 0; rep < 10; ++rep) {
    const Index m = rep % 2 == 0 ? 3 : 2;
    const CostMatrix c = random_cosine_cost(rng, m, 2, 4);
    const SolverConfig cfg = make_cfg(0.05, 0.5, 1.0, true, 50000, 1e-10);
    const Measure w = Measure::uniform(m);
    const Measure v = Measure::uniform(2);
    const TransportPlan plan = solve_uot(c, w, v, cfg);
    const OracleResult oracle = oracle_solve_uot(c, w, v, cfg);
    REQUIRE(plan.converged);
    CHECK(plan.objective.total <= oracle.total + 1e-4);
    CHECK(std::abs(plan.objective.total - oracle.total) < 1e-4);
  }
}

TEST_CASE("measure validation") {
  Vector neg(2);
  neg << -1.0, 2.0;
  CHECK_THROWS_AS(Measure::from_weights(neg), DomainError);
  CHECK_THROWS_AS(Measure::from_weights(Vector::Zero(3)), DomainError);
  Vector unnorm(2);
  unnorm << 0.6, 0.6;
  CHECK_THROWS_AS(Measure::from_weights(unnorm, true), DomainError);
  CHECK(Measure::uniform(4).weights.sum() == doctest::Approx(1.0));
}
