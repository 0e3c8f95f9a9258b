#include "uot/ctc.hpp"

#include "uot/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace uot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void check_labels(const LabelSequence& y, Index vocab) {
  for (int tok : y.tokens) {
    if (tok < 1 || tok >= vocab) {
      throw DomainError("label " + std::to_string(tok) + " outside [1, " +
                        std::to_string(vocab - 1) + "]");
    }
  }
}

// Extended sequence: blank, y1, blank, y2, ..., blank.
std::vector<int> extend_labels(const LabelSequence& y) {
  std::vector<int> ext(2 * y.size() + 1, kBlankIndex);
  for (std::size_t i = 0; i < y.size(); ++i) {
    ext[2 * i + 1] = y.tokens[i];
  }
  return ext;
}

// alpha(t, s) = log prob of prefixes of length t+1 ending in extended state s.
Matrix ctc_forward(const LogProbLattice& lattice, const std::vector<int>& ext) {
  const Index t_max = lattice.frames();
  const Index s_max = static_cast<Index>(ext.size());
  Matrix a = Matrix::Constant(t_max, s_max, -kInf);
  a(0, 0) = lattice.values(0, ext[0]);
  if (s_max > 1) {
    a(0, 1) = lattice.values(0, ext[1]);
  }
  for (Index t = 1; t < t_max; ++t) {
    for (Index s = 0; s < s_max; ++s) {
      double acc = a(t - 1, s);
      if (s >= 1) acc = log_add(acc, a(t - 1, s - 1));
      if (s >= 2 && ext[s] != kBlankIndex && ext[s] != ext[s - 2]) {
        acc = log_add(acc, a(t - 1, s - 2));
      }
      a(t, s) = acc == -kInf ? -kInf : acc + lattice.values(t, ext[s]);
    }
  }
  return a;
}

// beta(t, s) = log prob of completing the target from state s after frame t.
Matrix ctc_backward(const LogProbLattice& lattice, const std::vector<int>& ext) {
  const Index t_max = lattice.frames();
  const Index s_max = static_cast<Index>(ext.size());
  Matrix b = Matrix::Constant(t_max, s_max, -kInf);
  b(t_max - 1, s_max - 1) = 0.0;
  if (s_max > 1) {
    b(t_max - 1, s_max - 2) = 0.0;
  }
  for (Index t = t_max - 2; t >= 0; --t) {
    for (Index s = 0; s < s_max; ++s) {
      double acc = b(t + 1, s) == -kInf ? -kInf : b(t + 1, s) + lattice.values(t + 1, ext[s]);
      if (s + 1 < s_max && b(t + 1, s + 1) != -kInf) {
        acc = log_add(acc, b(t + 1, s + 1) + lattice.values(t + 1, ext[s + 1]));
      }
      if (s + 2 < s_max && ext[s + 2] != kBlankIndex && ext[s + 2] != ext[s] &&
          b(t + 1, s + 2) != -kInf) {
        acc = log_add(acc, b(t + 1, s + 2) + lattice.values(t + 1, ext[s + 2]));
      }
      b(t, s) = acc;
    }
  }
  return b;
}

double total_log_prob(const Matrix& a) {
  const Index t_max = a.rows(), s_max = a.cols();
  double total = a(t_max - 1, s_max - 1);
  if (s_max > 1) {
    total = log_add(total, a(t_max - 1, s_max - 2));
  }
  return total;
}

}  // namespace

LogProbLattice LogProbLattice::from_probs(const Matrix& probs) {
  LogProbLattice lattice;
  lattice.values = probs.array().log();
  return lattice;
}

void validate(const LogProbLattice& lattice) {
  if (lattice.frames() < 1 || lattice.vocab() < 2) {
    throw ShapeError("lattice must be T x V with T >= 1, V >= 2");
  }
  for (Index t = 0; t < lattice.frames(); ++t) {
    double s = 0.0;
    const double mx = lattice.values.row(t).maxCoeff();
    for (Index k = 0; k < lattice.vocab(); ++k) {
      s += std::exp(lattice.values(t, k) - mx);
    }
    if (std::abs(mx + std::log(s)) > 1e-6) {
      throw DomainError("lattice row " + std::to_string(t) +
                        " does not log-sum-exp to 0");
    }
  }
}

CtcResult ctc_loss(const LogProbLattice& lattice, const LabelSequence& y) {
  if (lattice.frames() < 1 || lattice.vocab() < 2) {
    throw ShapeError("ctc_loss: lattice must be T x V with T >= 1, V >= 2");
  }
  check_labels(y, lattice.vocab());
  const auto ext = extend_labels(y);
  const Matrix a = ctc_forward(lattice, ext);
  const double total = total_log_prob(a);
  if (total == -kInf) {
    return {kInf, false};
  }
  return {-total, true};
}

CtcResult ctc_bruteforce(const LogProbLattice& lattice, const LabelSequence& y) {
  const Index t_max = lattice.frames();
  const Index vocab = lattice.vocab();
  check_labels(y, vocab);
  double paths = 1.0;
  for (Index t = 0; t < t_max; ++t) {
    paths *= static_cast<double>(vocab);
    if (paths > 1e6) {
      throw SizeError("ctc_bruteforce: V^T exceeds 1e6");
    }
  }

  std::vector<int> path(static_cast<std::size_t>(t_max), 0);
  double total = 0.0;
  const auto count = static_cast<std::uint64_t>(paths);
  for (std::uint64_t code = 0; code < count; ++code) {
    std::uint64_t rem = code;
    for (Index t = 0; t < t_max; ++t) {
      path[static_cast<std::size_t>(t)] = static_cast<int>(rem % vocab);
      rem /= static_cast<std::uint64_t>(vocab);
    }
    // Collapse: drop repeats, then blanks.
    std::vector<int> collapsed;
    int prev = -1;
    for (int tok : path) {
      if (tok != prev && tok != kBlankIndex) {
        collapsed.push_back(tok);
      }
      prev = tok;
    }
    if (collapsed.size() != y.size() ||
        !std::equal(collapsed.begin(), collapsed.end(), y.tokens.begin())) {
      continue;
    }
    double lp = 0.0;
    for (Index t = 0; t < t_max; ++t) {
      lp += lattice.values(t, path[static_cast<std::size_t>(t)]);
    }
    total += std::exp(lp);
  }
  if (total == 0.0) {
    return {kInf, false};
  }
  return {-std::log(total), true};
}

Matrix ctc_posteriors(const LogProbLattice& lattice, const LabelSequence& y) {
  check_labels(y, lattice.vocab());
  const auto ext = extend_labels(y);
  const Matrix a = ctc_forward(lattice, ext);
  const Matrix b = ctc_backward(lattice, ext);
  const double total = total_log_prob(a);
  if (total == -kInf) {
    throw InfeasibilityError("ctc_posteriors: no valid path (T too short for target)");
  }
  Matrix q = Matrix::Zero(lattice.frames(), lattice.vocab());
  for (Index t = 0; t < lattice.frames(); ++t) {
    for (std::size_t s = 0; s < ext.size(); ++s) {
      const double lp = a(t, static_cast<Index>(s)) + b(t, static_cast<Index>(s));
      if (lp != -kInf) {
        q(t, ext[s]) += std::exp(lp - total);
      }
    }
  }
  return q;
}

Matrix ctc_grad(const LogProbLattice& lattice, const LabelSequence& y) {
  return -ctc_posteriors(lattice, y);
}

LabelSequence greedy_decode(const Matrix& probs) {
  LabelSequence out;
  int prev = -1;
  for (Index t = 0; t < probs.rows(); ++t) {
    Index arg = 0;
    probs.row(t).maxCoeff(&arg);
    const int tok = static_cast<int>(arg);
    if (tok != prev && tok != kBlankIndex) {
      out.tokens.push_back(tok);
    }
    prev = tok;
  }
  return out;
}

}  // namespace uot
