#include "uot/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace uot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// KL summand with the 0 log 0 = 0 convention; zero targets admit only zero mass.
double kl_sum_allow_zero(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double ai = a(i), bi = b(i);
    if (ai < 0.0 || bi < 0.0) {
      throw DomainError("generalized KL: negative entry");
    }
    if (ai == 0.0) {
      s += bi;
    } else if (bi == 0.0) {
      return kInf;
    } else {
      s += ai * std::log(ai / bi) - ai + bi;
    }
  }
  return s;
}

Vector safe_log(const Vector& x) {
  Vector out(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    out(i) = x(i) > 0.0 ? std::log(x(i)) : -kInf;
  }
  return out;
}

// lse_j(G(i,j) + x(j)) per row.
Vector log_matvec(const Matrix& g, const Vector& x) {
  const Index m = g.rows(), n = g.cols();
  Vector out(m);
  for (Index i = 0; i < m; ++i) {
    double mx = -kInf;
    for (Index j = 0; j < n; ++j) {
      mx = std::max(mx, g(i, j) + x(j));
    }
    if (mx == -kInf || std::isnan(mx)) {
      out(i) = mx;
      continue;
    }
    double s = 0.0;
    for (Index j = 0; j < n; ++j) {
      s += std::exp(g(i, j) + x(j) - mx);
    }
    out(i) = mx + std::log(s);
  }
  return out;
}

// lse_i(G(i,j) + x(i)) per column.
Vector log_matvec_t(const Matrix& g, const Vector& x) {
  const Index m = g.rows(), n = g.cols();
  Vector out(n);
  for (Index j = 0; j < n; ++j) {
    double mx = -kInf;
    for (Index i = 0; i < m; ++i) {
      mx = std::max(mx, g(i, j) + x(i));
    }
    if (mx == -kInf || std::isnan(mx)) {
      out(j) = mx;
      continue;
    }
    double s = 0.0;
    for (Index i = 0; i < m; ++i) {
      s += std::exp(g(i, j) + x(i) - mx);
    }
    out(j) = mx + std::log(s);
  }
  return out;
}

// Sup-norm change between log-scaling iterates; matching -inf entries count
// as no change, a finite/infinite mismatch as infinite change.
double sup_log_change(const Vector& prev, const Vector& next) {
  double r = 0.0;
  for (Index i = 0; i < prev.size(); ++i) {
    const double a = prev(i), b = next(i);
    if (a == b) continue;
    if (std::isinf(a) || std::isinf(b)) return kInf;
    r = std::max(r, std::abs(a - b));
  }
  return r;
}

// Change of linear-domain scalings measured on logs; 0 -> 0 is no change.
double sup_ratio_change(const Vector& prev, const Vector& next) {
  double r = 0.0;
  for (Index i = 0; i < prev.size(); ++i) {
    const double a = prev(i), b = next(i);
    if (a == b) continue;
    if (a <= 0.0 || b <= 0.0) return kInf;
    r = std::max(r, std::abs(std::log(b / a)));
  }
  return r;
}

void check_shapes(const CostMatrix& c, const Measure& w, const Measure& v) {
  if (c.rows() != w.size() || c.cols() != v.size()) {
    throw ShapeError("solver: cost is " + std::to_string(c.rows()) + "x" +
                     std::to_string(c.cols()) + " but |w| = " + std::to_string(w.size()) +
                     ", |v| = " + std::to_string(v.size()));
  }
}

TransportPlan run_linear(const CostMatrix& c, const Measure& w, const Measure& v,
                         double eps, double p1, double p2, int max_iters, double tol,
                         bool marginal_stop) {
  const Matrix k = gibbs_kernel(c, eps);
  const Index m = k.rows(), n = k.cols();
  Vector alpha = Vector::Ones(m);
  Vector beta = Vector::Ones(n);

  TransportPlan plan;
  for (int t = 1; t <= max_iters; ++t) {
    const Vector kb = k * beta;
    if (marginal_stop) {
      // Column marginals are exact after every beta update, so the row
      // violation of the current iterate is the full marginal residual.
      const double row_err = (alpha.cwiseProduct(kb) - w.weights).cwiseAbs().maxCoeff();
      plan.residual = row_err;
      if (row_err < tol) {
        plan.converged = true;
        break;
      }
    }
    const Vector alpha_new =
        p1 == 0.0 ? Vector::Ones(m)
                  : Vector((w.weights.array() / kb.array()).pow(p1));
    const Vector ka = k.transpose() * alpha_new;
    const Vector beta_new =
        p2 == 0.0 ? Vector::Ones(n)
                  : Vector((v.weights.array() / ka.array()).pow(p2));
    if (!alpha_new.allFinite() || !beta_new.allFinite()) {
      throw SolverError("solve: non-finite scaling at iteration " + std::to_string(t) +
                        "; rerun with log_domain=true");
    }
    if (!marginal_stop) {
      plan.residual = std::max(sup_ratio_change(alpha, alpha_new),
                               sup_ratio_change(beta, beta_new));
    }
    alpha = alpha_new;
    beta = beta_new;
    plan.iterations = t;
    if (!marginal_stop && plan.residual < tol) {
      plan.converged = true;
      break;
    }
  }
  plan.gamma = alpha.asDiagonal() * k * beta.asDiagonal();
  plan.alpha = alpha;
  plan.beta = beta;
  plan.log_alpha = safe_log(alpha);
  plan.log_beta = safe_log(beta);
  return plan;
}

TransportPlan run_log(const CostMatrix& c, const Measure& w, const Measure& v, double eps,
                      double p1, double p2, int max_iters, double tol, bool marginal_stop) {
  const Index m = c.rows(), n = c.cols();
  const Matrix g = -c.values / eps;  // log Gibbs kernel
  const Vector logw = safe_log(w.weights);
  const Vector logv = safe_log(v.weights);
  Vector la = Vector::Zero(m);
  Vector lb = Vector::Zero(n);

  TransportPlan plan;
  for (int t = 1; t <= max_iters; ++t) {
    const Vector lkb = log_matvec(g, lb);
    if (marginal_stop) {
      double row_err = 0.0;
      for (Index i = 0; i < m; ++i) {
        row_err = std::max(row_err, std::abs(std::exp(la(i) + lkb(i)) - w.weights(i)));
      }
      plan.residual = row_err;
      if (row_err < tol) {
        plan.converged = true;
        break;
      }
    }
    Vector la_new(m);
    for (Index i = 0; i < m; ++i) {
      la_new(i) = p1 == 0.0 ? 0.0 : p1 * (logw(i) - lkb(i));
    }
    const Vector lka = log_matvec_t(g, la_new);
    Vector lb_new(n);
    for (Index j = 0; j < n; ++j) {
      lb_new(j) = p2 == 0.0 ? 0.0 : p2 * (logv(j) - lka(j));
    }
    if (!marginal_stop) {
      plan.residual = std::max(sup_log_change(la, la_new), sup_log_change(lb, lb_new));
    }
    la = la_new;
    lb = lb_new;
    plan.iterations = t;
    if (!marginal_stop && plan.residual < tol) {
      plan.converged = true;
      break;
    }
  }
  plan.gamma.resize(m, n);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      plan.gamma(i, j) = std::exp(la(i) + g(i, j) + lb(j));
    }
  }
  plan.log_alpha = la;
  plan.log_beta = lb;
  plan.alpha = Vector(m);
  plan.beta = Vector(n);
  for (Index i = 0; i < m; ++i) plan.alpha(i) = std::exp(la(i));
  for (Index j = 0; j < n; ++j) plan.beta(j) = std::exp(lb(j));
  return plan;
}

}  // namespace

Measure Measure::uniform(Index k) {
  if (k < 1) {
    throw ShapeError("Measure::uniform: size must be >= 1");
  }
  Measure mu;
  mu.weights = Vector::Constant(k, 1.0 / static_cast<double>(k));
  mu.normalized = true;
  return mu;
}

Measure Measure::from_weights(Vector w, bool normalized) {
  if (w.size() < 1) {
    throw ShapeError("Measure: empty weight vector");
  }
  if (!w.allFinite() || (w.array() < 0.0).any()) {
    throw DomainError("Measure: weights must be finite and nonnegative");
  }
  if ((w.array() == 0.0).all()) {
    throw DomainError("Measure: at least one weight must be positive");
  }
  if (normalized && std::abs(w.sum() - 1.0) > 1e-9) {
    throw DomainError("Measure: flagged normalized but weights sum to " +
                      std::to_string(w.sum()));
  }
  Measure mu;
  mu.weights = std::move(w);
  mu.normalized = normalized;
  return mu;
}

void validate(const SolverConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) {
    throw ConfigError("solver config: epsilon must be > 0");
  }
  if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0) {
    throw ConfigError("solver config: lambda1/lambda2 must be >= 0");
  }
  if (cfg.max_iters < 1) {
    throw ConfigError("solver config: max_iters must be >= 1");
  }
  if (!(cfg.tolerance > 0.0)) {
    throw ConfigError("solver config: tolerance must be > 0");
  }
}

Matrix gibbs_kernel(const CostMatrix& c, double epsilon) {
  if (!(epsilon > 0.0)) {
    throw ConfigError("gibbs_kernel: epsilon must be > 0");
  }
  // Elementwise std::exp: Eigen's packet exp clamps deep underflow to a
  // denormal instead of 0, which breaks the exact free-matching identity
  // and hides genuine linear-domain overflow.
  Matrix k(c.rows(), c.cols());
  for (Index i = 0; i < k.rows(); ++i) {
    for (Index j = 0; j < k.cols(); ++j) {
      k(i, j) = std::exp(-c.values(i, j) / epsilon);
    }
  }
  return k;
}

double generalized_kl(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw ShapeError("generalized_kl: size mismatch");
  }
  if ((b.array() <= 0.0).any()) {
    throw DomainError("generalized_kl: reference vector must be strictly positive");
  }
  return kl_sum_allow_zero(a, b);
}

std::pair<Vector, Vector> marginals(const Matrix& gamma) {
  return {gamma.rowwise().sum(), gamma.colwise().sum().transpose()};
}

ObjectiveBreakdown objective(const Matrix& gamma, const CostMatrix& c, const Measure& w,
                             const Measure& v, const SolverConfig& cfg) {
  if (gamma.rows() != c.rows() || gamma.cols() != c.cols()) {
    throw ShapeError("objective: plan/cost shape mismatch");
  }
  check_shapes(c, w, v);

  ObjectiveBreakdown b;
  b.lambda1 = cfg.lambda1;
  b.lambda2 = cfg.lambda2;
  b.epsilon = cfg.epsilon;
  b.transport_cost = (gamma.array() * c.values.array()).sum();
  const auto [row, col] = marginals(gamma);
  b.kl_row = kl_sum_allow_zero(row, w.weights);
  b.kl_col = kl_sum_allow_zero(col, v.weights);
  for (Index i = 0; i < gamma.rows(); ++i) {
    for (Index j = 0; j < gamma.cols(); ++j) {
      const double g = gamma(i, j);
      if (g > 0.0) {
        const double lg = std::log(g);
        b.neg_entropy += g * (lg - 1.0);
        b.entropy_plain -= g * lg;
      }
    }
  }
  b.total = b.transport_cost + b.lambda1 * b.kl_row + b.lambda2 * b.kl_col +
            b.epsilon * b.neg_entropy;
  return b;
}

TransportPlan solve_uot(const CostMatrix& c, const Measure& w, const Measure& v,
                        const SolverConfig& cfg) {
  validate(cfg);
  check_shapes(c, w, v);
  const double p1 = cfg.lambda1 / (cfg.lambda1 + cfg.epsilon);
  const double p2 = cfg.lambda2 / (cfg.lambda2 + cfg.epsilon);
  TransportPlan plan =
      cfg.log_domain
          ? run_log(c, w, v, cfg.epsilon, p1, p2, cfg.max_iters, cfg.tolerance, false)
          : run_linear(c, w, v, cfg.epsilon, p1, p2, cfg.max_iters, cfg.tolerance, false);
  plan.objective = objective(plan.gamma, c, w, v, cfg);
  return plan;
}

TransportPlan solve_balanced(const CostMatrix& c, const Measure& w, const Measure& v,
                             double epsilon, int max_iters, double tolerance,
                             bool log_domain) {
  SolverConfig cfg;
  cfg.epsilon = epsilon;
  cfg.max_iters = max_iters;
  cfg.tolerance = tolerance;
  cfg.lambda1 = 0.0;  // marginals are constraints here, not penalties
  cfg.lambda2 = 0.0;
  validate(cfg);
  check_shapes(c, w, v);
  const double mass_gap = std::abs(w.total() - v.total());
  if (mass_gap > 1e-9 * std::max({1.0, w.total(), v.total()})) {
    throw InfeasibilityError("solve_balanced: total masses differ (" +
                             std::to_string(w.total()) + " vs " + std::to_string(v.total()) +
                             ")");
  }
  TransportPlan plan =
      log_domain ? run_log(c, w, v, epsilon, 1.0, 1.0, max_iters, tolerance, true)
                 : run_linear(c, w, v, epsilon, 1.0, 1.0, max_iters, tolerance, true);
  plan.objective = objective(plan.gamma, c, w, v, cfg);
  return plan;
}

OracleResult oracle_solve_uot(const CostMatrix& c, const Measure& w, const Measure& v,
                              const SolverConfig& cfg) {
  validate(cfg);
  check_shapes(c, w, v);
  const Index m = c.rows(), n = c.cols();
  if (m * n > 12) {
    throw SizeError("oracle_solve_uot: instance has " + std::to_string(m * n) +
                    " cells, limit is 12");
  }

  // Entries whose target weight is zero under a positive penalty are pinned
  // to zero; any mass there makes the objective infinite.
  Matrix active = Matrix::Ones(m, n);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      if ((cfg.lambda1 > 0.0 && w.weights(i) == 0.0) ||
          (cfg.lambda2 > 0.0 && v.weights(j) == 0.0)) {
        active(i, j) = 0.0;
      }
    }
  }

  std::mt19937_64 rng(0x9d2c5680u);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  const double base = std::max(w.total() * v.total() / static_cast<double>(m * n), 1e-6);

  OracleResult best;
  double f_min = kInf;
  double f_max = -kInf;
  for (int start = 0; start < 8; ++start) {
    Matrix g(m, n);
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < n; ++j) {
        g(i, j) = start == 0 ? base : base * std::exp(jitter(rng));
      }
    }
    g = g.cwiseProduct(active).cwiseMax(active * 1e-300);

    double f = objective(g, c, w, v, cfg).total;
    double step = 0.5 / (1.0 + cfg.lambda1 + cfg.lambda2 + cfg.epsilon);
    const double step0 = step;
    for (int it = 0; it < 50000; ++it) {
      const auto [row, col] = marginals(g);
      Matrix grad(m, n);
      double grad_sup = 0.0;
      for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < n; ++j) {
          if (active(i, j) == 0.0) {
            grad(i, j) = 0.0;
            continue;
          }
          double d = c.values(i, j) + cfg.epsilon * std::log(g(i, j));
          if (cfg.lambda1 > 0.0) d += cfg.lambda1 * std::log(row(i) / w.weights(i));
          if (cfg.lambda2 > 0.0) d += cfg.lambda2 * std::log(col(j) / v.weights(j));
          grad(i, j) = d;
          grad_sup = std::max(grad_sup, std::abs(d) * g(i, j));
        }
      }
      if (grad_sup < 1e-14) break;
      const Matrix g_new = (g.array() * (-step * grad.array()).exp() * active.array()).matrix();
      const Matrix g_clamped = g_new.cwiseMax(active * 1e-300);
      const double f_new = objective(g_clamped, c, w, v, cfg).total;
      if (f_new < f) {
        g = g_clamped;
        f = f_new;
        step = std::min(step * 1.05, step0);
      } else {
        step *= 0.5;
        if (step < 1e-15) break;
      }
    }
    if (f < f_min) {
      f_min = f;
      best.gamma = g;
    }
    f_max = std::max(f_max, f);
  }
  best.total = f_min;
  best.start_spread = f_max - f_min;
  return best;
}

}  // namespace uot
