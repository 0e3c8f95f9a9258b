#include "uot/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace uot {

namespace {

constexpr double kLnEps = 1e-5;

struct Forward {
  FeatureSequence x;       // m x raw_dim
  Matrix a;                // m x d_a
  Matrix h;                // m x d_l
  CostMatrix cost;         // m x n
  Matrix z0, z1, z2;       // adapter intermediates
  Matrix a_tilde;          // m x d_a
  Matrix probs;            // m x V
  LossParts parts;
};

Matrix affine(const Matrix& x, const Matrix& w, const Vector& b) {
  return (x * w).rowwise() + b.transpose();
}

// Forward pass against a frozen transport plan.
Forward run_forward(const SyntheticInstance& inst, const ToyModelParams& params,
                    const TrainConfig& cfg, const TransportPlan& plan) {
  Forward f;
  f.x = raw_inputs(inst, cfg);
  f.a = affine(f.x.data, params.encoder_weight, params.encoder_bias);
  FeatureSequence a_seq{f.a, Side::Acoustic};
  FeatureSequence h_seq = project_features(a_seq, params.projection);
  f.h = h_seq.data;
  f.cost = cost_matrix(h_seq, inst.linguistic, Metric::CosineDistance);

  f.z0 = layer_norm(f.h, params.adapter.ln_in_gain, params.adapter.ln_in_bias);
  f.z1 = affine(f.z0, params.adapter.fc_l2a_weight, params.adapter.fc_l2a_bias);
  f.z2 = layer_norm(f.z1, params.adapter.ln_out_gain, params.adapter.ln_out_bias);
  f.a_tilde = f.a + f.z2;
  f.probs = predict(FeatureSequence{f.a_tilde, Side::Acoustic}, params.head);

  const LogProbLattice lattice{f.probs.array().log().matrix()};
  const CtcResult ctc = ctc_loss(lattice, inst.labels);
  f.parts.ctc = ctc.loss;
  f.parts.ctc_feasible = ctc.feasible;

  const FeatureSequence l_proj = project_to_linguistic(plan.gamma, h_seq);
  f.parts.align = alignment_loss(l_proj, inst.linguistic);

  const Measure w = Measure::uniform(f.h.rows());
  const Measure v = Measure::uniform(inst.tokens());
  f.parts.uot = objective(plan.gamma, f.cost, w, v, cfg.solver).total;

  f.parts.solver_converged = plan.converged;
  f.parts.total = cfg.eta * f.parts.ctc + (1.0 - cfg.eta) * (f.parts.align + f.parts.uot);
  return f;
}

using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;

// d(LN(x))/dx given upstream dy; also accumulates gain/bias grads.
Matrix layer_norm_backward(const Matrix& x, const Vector& gain, const Matrix& dy,
                           Vector& dgain, Vector& dbias) {
  const Index d = x.cols();
  Matrix dx(x.rows(), d);
  const RowArray g = gain.transpose().array();
  for (Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().sum() / static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    const RowArray xhat = (x.row(i).array() - mean) * inv;
    const RowArray dyr = dy.row(i).array();
    dgain += (dyr * xhat).matrix().transpose();
    dbias += dyr.matrix().transpose();
    const RowArray dxhat = dyr * g;
    const double m1 = dxhat.mean();
    const double m2 = (dxhat * xhat).mean();
    dx.row(i) = (inv * (dxhat - m1 - xhat * m2)).matrix();
  }
  return dx;
}

// Gradient of sum_j weight_j * (1 - cos(x_row, y_j)) with respect to x_row,
// where S = sum_j weight_j * normalized(y_j) is precomputed by the caller.
Vector cosine_grad(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& s) {
  const double norm = x.norm();
  if (norm <= kTinyNorm) {
    return Vector::Zero(x.size());
  }
  const Eigen::RowVectorXd xhat = x / norm;
  return (-(s - xhat.dot(s) * xhat) / norm).transpose();
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  return x;
}

}  // namespace

ToyModelParams ToyModelParams::init_random(Index raw_dim, Index d_a, Index d_l, Index vocab,
                                           std::uint64_t seed) {
  if (raw_dim < 1 || d_a < 1 || d_l < 1 || vocab < 2) {
    throw ShapeError("init_random: dims must be positive and vocab >= 2");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Matrix& m, Index rows, Index cols) {
    m.resize(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        m(i, j) = scale * normal(rng);
      }
    }
  };
  ToyModelParams p;
  fill(p.encoder_weight, raw_dim, d_a);
  p.encoder_bias = Vector::Zero(d_a);
  fill(p.projection.weight, d_a, d_l);
  p.projection.bias = Vector::Zero(d_l);
  fill(p.adapter.fc_l2a_weight, d_l, d_a);
  p.adapter.fc_l2a_bias = Vector::Zero(d_a);
  p.adapter.ln_in_gain = Vector::Ones(d_l);
  p.adapter.ln_in_bias = Vector::Zero(d_l);
  p.adapter.ln_out_gain = Vector::Ones(d_a);
  p.adapter.ln_out_bias = Vector::Zero(d_a);
  fill(p.head.weight, d_a, vocab);
  p.head.bias = Vector::Zero(vocab);
  return p;
}

ToyModelParams ToyModelParams::zeros_like(const ToyModelParams& ref) {
  ToyModelParams p;
  p.encoder_weight = Matrix::Zero(ref.encoder_weight.rows(), ref.encoder_weight.cols());
  p.encoder_bias = Vector::Zero(ref.encoder_bias.size());
  p.projection.weight = Matrix::Zero(ref.projection.weight.rows(), ref.projection.weight.cols());
  p.projection.bias = Vector::Zero(ref.projection.bias.size());
  p.adapter.fc_l2a_weight =
      Matrix::Zero(ref.adapter.fc_l2a_weight.rows(), ref.adapter.fc_l2a_weight.cols());
  p.adapter.fc_l2a_bias = Vector::Zero(ref.adapter.fc_l2a_bias.size());
  p.adapter.ln_in_gain = Vector::Zero(ref.adapter.ln_in_gain.size());
  p.adapter.ln_in_bias = Vector::Zero(ref.adapter.ln_in_bias.size());
  p.adapter.ln_out_gain = Vector::Zero(ref.adapter.ln_out_gain.size());
  p.adapter.ln_out_bias = Vector::Zero(ref.adapter.ln_out_bias.size());
  p.head.weight = Matrix::Zero(ref.head.weight.rows(), ref.head.weight.cols());
  p.head.bias = Vector::Zero(ref.head.bias.size());
  return p;
}

std::vector<Eigen::Map<Vector>> param_views(ToyModelParams& p) {
  std::vector<Eigen::Map<Vector>> views;
  auto add = [&](double* data, Index size) { views.emplace_back(data, size); };
  add(p.encoder_weight.data(), p.encoder_weight.size());
  add(p.encoder_bias.data(), p.encoder_bias.size());
  add(p.projection.weight.data(), p.projection.weight.size());
  add(p.projection.bias.data(), p.projection.bias.size());
  add(p.adapter.fc_l2a_weight.data(), p.adapter.fc_l2a_weight.size());
  add(p.adapter.fc_l2a_bias.data(), p.adapter.fc_l2a_bias.size());
  add(p.adapter.ln_in_gain.data(), p.adapter.ln_in_gain.size());
  add(p.adapter.ln_in_bias.data(), p.adapter.ln_in_bias.size());
  add(p.adapter.ln_out_gain.data(), p.adapter.ln_out_gain.size());
  add(p.adapter.ln_out_bias.data(), p.adapter.ln_out_bias.size());
  add(p.head.weight.data(), p.head.weight.size());
  add(p.head.bias.data(), p.head.bias.size());
  return views;
}

void validate(const TrainConfig& cfg) {
  if (cfg.eta < 0.0 || cfg.eta > 1.0) {
    throw ConfigError("train config: eta must lie in [0, 1]");
  }
  if (cfg.epochs < 1 || cfg.batch_size < 1) {
    throw ConfigError("train config: epochs and batch_size must be >= 1");
  }
  if (cfg.learning_rate < 0.0) {
    throw ConfigError("train config: learning_rate must be >= 0");
  }
  if (cfg.raw_dim < 1 || cfg.d_a < 1) {
    throw ConfigError("train config: raw_dim and d_a must be >= 1");
  }
  validate(cfg.solver);
}

FeatureSequence raw_inputs(const SyntheticInstance& inst, const TrainConfig& cfg) {
  return distort_features(inst.acoustic, cfg.raw_dim, mix(cfg.seed, 0xd15707ull)).raw;
}

LossParts loss_with_plan(const SyntheticInstance& inst, const ToyModelParams& params,
                         const TrainConfig& cfg, const TransportPlan& plan) {
  return run_forward(inst, params, cfg, plan).parts;
}

TransportPlan solve_alignment_plan(const SyntheticInstance& inst,
                                   const ToyModelParams& params, const TrainConfig& cfg) {
  const FeatureSequence x = raw_inputs(inst, cfg);
  const Matrix a = affine(x.data, params.encoder_weight, params.encoder_bias);
  const FeatureSequence h =
      project_features(FeatureSequence{a, Side::Acoustic}, params.projection);
  const CostMatrix c = cost_matrix(h, inst.linguistic, Metric::CosineDistance);
  return solve_uot(c, Measure::uniform(h.length()), Measure::uniform(inst.tokens()),
                   cfg.solver);
}

namespace {

// Decode-only path: encoder -> adapter -> head, no transport solve.
Matrix forward_probs(const SyntheticInstance& inst, const ToyModelParams& params,
                     const TrainConfig& cfg) {
  const FeatureSequence x = raw_inputs(inst, cfg);
  const Matrix a = affine(x.data, params.encoder_weight, params.encoder_bias);
  const Matrix h =
      project_features(FeatureSequence{a, Side::Acoustic}, params.projection).data;
  const Matrix z0 = layer_norm(h, params.adapter.ln_in_gain, params.adapter.ln_in_bias);
  const Matrix z1 = affine(z0, params.adapter.fc_l2a_weight, params.adapter.fc_l2a_bias);
  const Matrix z2 = layer_norm(z1, params.adapter.ln_out_gain, params.adapter.ln_out_bias);
  return predict(FeatureSequence{a + z2, Side::Acoustic}, params.head);
}

struct StepResult {
  LossParts parts;
  ToyModelParams grads;
};

StepResult forward_backward(const SyntheticInstance& inst, const ToyModelParams& params,
                            const TrainConfig& cfg, const TransportPlan& plan) {
  const Forward f = run_forward(inst, params, cfg, plan);
  const Index m = f.h.rows();
  const Index d_l = f.h.cols();

  StepResult res;
  res.parts = f.parts;
  res.grads = ToyModelParams::zeros_like(params);

  // CTC path: d total / d logits = eta * (P - Q).
  Matrix d_a_tilde = Matrix::Zero(m, f.a_tilde.cols());
  if (cfg.eta > 0.0) {
    if (!f.parts.ctc_feasible) {
      throw SolverError(
          "loss is non-finite: CTC target unreachable from the current lattice");
    }
    const LogProbLattice lattice{f.probs.array().log().matrix()};
    const Matrix q = ctc_posteriors(lattice, inst.labels);
    const Matrix d_logits = cfg.eta * (f.probs - q);
    res.grads.head.weight = f.a_tilde.transpose() * d_logits;
    res.grads.head.bias = d_logits.colwise().sum().transpose();
    d_a_tilde = d_logits * params.head.weight.transpose();
  }

  Matrix dh = Matrix::Zero(m, d_l);
  const double rho = 1.0 - cfg.eta;
  if (rho > 0.0) {
    // Transport-cost term: d/dh_i of sum_j gamma_ij (1 - cos(h_i, l_j)).
    const NormalizeResult ln = normalize_rows(inst.linguistic);
    const Matrix s_uot = plan.gamma * ln.features.data;  // m x d_l
    for (Index i = 0; i < m; ++i) {
      dh.row(i) += rho * cosine_grad(f.h.row(i), s_uot.row(i)).transpose();
    }
    // Alignment term through l_proj = gamma^T h.
    const Matrix l_proj = plan.gamma.transpose() * f.h;
    Matrix d_proj = Matrix::Zero(l_proj.rows(), d_l);
    for (Index j = 0; j < l_proj.rows(); ++j) {
      d_proj.row(j) =
          rho * cosine_grad(l_proj.row(j), ln.features.data.row(j)).transpose();
    }
    dh += plan.gamma * d_proj;
  }

  // Adapter path (always active: feeds the CTC head through a_tilde).
  Vector dg_out = Vector::Zero(params.adapter.ln_out_gain.size());
  Vector db_out = Vector::Zero(params.adapter.ln_out_bias.size());
  const Matrix dz1 =
      layer_norm_backward(f.z1, params.adapter.ln_out_gain, d_a_tilde, dg_out, db_out);
  res.grads.adapter.ln_out_gain = dg_out;
  res.grads.adapter.ln_out_bias = db_out;
  res.grads.adapter.fc_l2a_weight = f.z0.transpose() * dz1;
  res.grads.adapter.fc_l2a_bias = dz1.colwise().sum().transpose();
  const Matrix dz0 = dz1 * params.adapter.fc_l2a_weight.transpose();
  Vector dg_in = Vector::Zero(params.adapter.ln_in_gain.size());
  Vector db_in = Vector::Zero(params.adapter.ln_in_bias.size());
  dh += layer_norm_backward(f.h, params.adapter.ln_in_gain, dz0, dg_in, db_in);
  res.grads.adapter.ln_in_gain = dg_in;
  res.grads.adapter.ln_in_bias = db_in;

  // Projection and encoder.
  res.grads.projection.weight = f.a.transpose() * dh;
  res.grads.projection.bias = dh.colwise().sum().transpose();
  const Matrix da = dh * params.projection.weight.transpose() + d_a_tilde;
  res.grads.encoder_weight = f.x.data.transpose() * da;
  res.grads.encoder_bias = da.colwise().sum().transpose();
  return res;
}

}  // namespace

LossParts total_loss(const SyntheticInstance& inst, const ToyModelParams& params,
                     const TrainConfig& cfg) {
  validate(cfg);
  return loss_with_plan(inst, params, cfg, solve_alignment_plan(inst, params, cfg));
}

ToyModelParams grad_params(const SyntheticInstance& inst, const ToyModelParams& params,
                           const TrainConfig& cfg) {
  validate(cfg);
  return forward_backward(inst, params, cfg, solve_alignment_plan(inst, params, cfg)).grads;
}

double token_error_rate(const LabelSequence& hyp, const LabelSequence& ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (hyp.tokens[i - 1] != ref.tokens[j - 1]);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(std::max<std::size_t>(1, m));
}

TrainResult train(const std::vector<SyntheticInstance>& dataset, const TrainConfig& cfg) {
  validate(cfg);
  if (dataset.empty()) {
    throw ConfigError("train: dataset must be nonempty");
  }
  const Index d_l = dataset.front().linguistic.dim();
  int max_label = 1;
  for (const auto& inst : dataset) {
    for (int tok : inst.labels.tokens) {
      max_label = std::max(max_label, tok);
    }
  }
  return train(dataset, cfg,
               ToyModelParams::init_random(cfg.raw_dim, cfg.d_a, d_l, max_label + 1,
                                           mix(cfg.seed, 1)));
}

TrainResult train(const std::vector<SyntheticInstance>& dataset, const TrainConfig& cfg,
                  ToyModelParams initial) {
  validate(cfg);
  if (dataset.empty()) {
    throw ConfigError("train: dataset must be nonempty");
  }
  const std::size_t total = dataset.size();
  const std::size_t dev_count = total >= 5 ? total / 5 : 0;
  std::vector<std::size_t> train_idx, dev_idx;
  for (std::size_t i = 0; i < total; ++i) {
    (i < total - dev_count ? train_idx : dev_idx).push_back(i);
  }
  if (dev_idx.empty()) {
    dev_idx = train_idx;  // tiny datasets evaluate on themselves
  }

  TrainResult result;
  result.params = std::move(initial);
  std::mt19937_64 rng(mix(cfg.seed, 2));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<LossParts> seen(dataset.size());
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const std::size_t batch_end = std::min(order.size(), at + cfg.batch_size);
      ToyModelParams acc = ToyModelParams::zeros_like(result.params);
      auto acc_views = param_views(acc);
      const double inv_batch = 1.0 / static_cast<double>(batch_end - at);
      for (std::size_t b = at; b < batch_end; ++b) {
        const SyntheticInstance& inst = dataset[order[b]];
        StepResult step = forward_backward(inst, result.params, cfg,
                                           solve_alignment_plan(inst, result.params, cfg));
        seen[order[b]] = step.parts;
        auto g_views = param_views(step.grads);
        for (std::size_t k = 0; k < acc_views.size(); ++k) {
          acc_views[k] += inv_batch * g_views[k];
        }
      }
      auto p_views = param_views(result.params);
      for (std::size_t k = 0; k < p_views.size(); ++k) {
        p_views[k] -= cfg.learning_rate * acc_views[k];
      }
    }
    // Means in dataset order, so the logged history does not depend on the
    // shuffle's summation order.
    EpochStats stats;
    for (std::size_t i : train_idx) {
      stats.total += seen[i].total;
      stats.ctc += seen[i].ctc;
      stats.align += seen[i].align;
      stats.uot += seen[i].uot;
    }
    const double inv_n = 1.0 / static_cast<double>(order.size());
    stats.total *= inv_n;
    stats.ctc *= inv_n;
    stats.align *= inv_n;
    stats.uot *= inv_n;
    if (!std::isfinite(stats.total)) {
      throw SolverError("train: total loss diverged (non-finite) at epoch " +
                        std::to_string(epoch));
    }

    double err = 0.0;
    for (std::size_t i : dev_idx) {
      const SyntheticInstance& inst = dataset[i];
      err += token_error_rate(greedy_decode(forward_probs(inst, result.params, cfg)),
                              inst.labels);
    }
    stats.dev_token_error = err / static_cast<double>(dev_idx.size());
    result.history.push_back(stats);
  }
  return result;
}

}  // namespace uot
