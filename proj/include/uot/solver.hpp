#pragma once

#include "uot/common.hpp"
#include "uot/geometry.hpp"

#include <utility>

namespace uot {

// Nonnegative weight vector over sequence positions.
struct Measure {
  Vector weights;
  bool normalized = false;

  static Measure uniform(Index k);
  // Validates nonnegativity and that some mass is present; if `normalized`
  // is set, the weights must sum to 1 within 1e-9.
  static Measure from_weights(Vector w, bool normalized = false);

  Index size() const { return weights.size(); }
  double total() const { return weights.sum(); }
};

struct SolverConfig {
  double epsilon = 0.05;   // entropy coefficient
  double lambda1 = 0.5;    // row-marginal KL weight
  double lambda2 = 1.0;    // column-marginal KL weight
  int max_iters = 1000;
  double tolerance = 1e-6;  // sup-norm change of log-scalings
  bool log_domain = true;
};

void validate(const SolverConfig& cfg);

struct ObjectiveBreakdown {
  double transport_cost = 0.0;  // sum gamma_ij C_ij
  double kl_row = 0.0;          // KL(gamma 1 || w)
  double kl_col = 0.0;          // KL(gamma^T 1 || v)
  double neg_entropy = 0.0;     // sum gamma (log gamma - 1), 0 log 0 = 0
  double entropy_plain = 0.0;   // -sum gamma log gamma, reported for transparency
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double epsilon = 0.0;
  double total = 0.0;  // cost + l1*kl_row + l2*kl_col + eps*neg_entropy
};

struct TransportPlan {
  Matrix gamma;      // m x n coupling
  Vector alpha;      // row scalings (exp of log_alpha; may overflow on extreme runs)
  Vector beta;       // column scalings
  Vector log_alpha;  // authoritative in log-domain mode
  Vector log_beta;
  int iterations = 0;
  double residual = 0.0;  // final sup-norm change of log-scalings
  bool converged = false;
  ObjectiveBreakdown objective;
};

// K_ij = exp(-C_ij / epsilon).
Matrix gibbs_kernel(const CostMatrix& c, double epsilon);

// sum_i [a_i log(a_i/b_i) - a_i + b_i], 0 log 0 = 0. Requires b > 0, a >= 0.
double generalized_kl(const Vector& a, const Vector& b);

// (row sums, column sums).
std::pair<Vector, Vector> marginals(const Matrix& gamma);

ObjectiveBreakdown objective(const Matrix& gamma, const CostMatrix& c, const Measure& w,
                             const Measure& v, const SolverConfig& cfg);

// Scaling iterations alpha <- (w / K beta)^(l1/(l1+eps)),
// beta <- (v / K^T alpha)^(l2/(l2+eps)), stopped on sup-norm change of the
// log-scalings. Linear mode throws SolverError on non-finite intermediates;
// log-domain mode evaluates log(K beta) by log-sum-exp.
TransportPlan solve_uot(const CostMatrix& c, const Measure& w, const Measure& v,
                        const SolverConfig& cfg);

// Classical Sinkhorn (alpha <- w / K beta, beta <- v / K^T alpha), stopped on
// the sup-norm marginal violation. Requires equal total masses.
TransportPlan solve_balanced(const CostMatrix& c, const Measure& w, const Measure& v,
                             double epsilon, int max_iters = 1000, double tolerance = 1e-6,
                             bool log_domain = true);

struct OracleResult {
  Matrix gamma;
  double total = 0.0;
  double start_spread = 0.0;  // max - min final objective across starts
};

// Independent verification oracle for tiny instances (m*n <= 12): minimizes
// the objective by multiplicative exponentiated-gradient descent from 8
// random positive starts with step halving on non-decrease.
OracleResult oracle_solve_uot(const CostMatrix& c, const Measure& w, const Measure& v,
                              const SolverConfig& cfg);

}  // namespace uot
