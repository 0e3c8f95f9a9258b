#pragma once

#include "uot/common.hpp"

#include <vector>

namespace uot {

// Target token sequence; indices in [1, V-1], blank (0) never appears.
struct LabelSequence {
  std::vector<int> tokens;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const LabelSequence&) const = default;
};

struct LogProbLattice {
  Matrix values;  // T x V log-probabilities

  static LogProbLattice from_probs(const Matrix& probs);
  Index frames() const { return values.rows(); }
  Index vocab() const { return values.cols(); }
};

// Throws DomainError unless every row log-sum-exps to 0 within 1e-6.
void validate(const LogProbLattice& lattice);

struct CtcResult {
  double loss = 0.0;
  bool feasible = true;
};

// Negative log of the total probability over all blank-augmented paths
// collapsing to y (forward recursion in log domain). Infeasible targets
// (T too short) yield +infinity with feasible = false.
CtcResult ctc_loss(const LogProbLattice& lattice, const LabelSequence& y);

// Exhaustive path enumeration; requires V^T <= 1e6.
CtcResult ctc_bruteforce(const LogProbLattice& lattice, const LabelSequence& y);

// Path posterior per (frame, vocab entry); rows sum to 1 for feasible targets.
Matrix ctc_posteriors(const LogProbLattice& lattice, const LabelSequence& y);

// d(ctc_loss)/d(lattice values) with entries treated as free variables;
// equals minus the path posterior. Throws InfeasibilityError if infeasible.
Matrix ctc_grad(const LogProbLattice& lattice, const LabelSequence& y);

// Per-frame argmax (ties -> lowest index), collapse repeats, drop blanks.
LabelSequence greedy_decode(const Matrix& probs);

}  // namespace uot
