#pragma once

#include "uot/alignment.hpp"
#include "uot/ctc.hpp"
#include "uot/geometry.hpp"
#include "uot/solver.hpp"
#include "uot/synth.hpp"

#include <cstdint>
#include <vector>

namespace uot {

// Toy stand-in for the acoustic encoder stack: linear encoder, projection
// into linguistic space, residual adapter, prediction head.
struct ToyModelParams {
  Matrix encoder_weight;  // raw_dim x d_a
  Vector encoder_bias;    // d_a
  ProjectionParams projection;
  AdapterParams adapter;
  PredictionHead head;

  static ToyModelParams init_random(Index raw_dim, Index d_a, Index d_l, Index vocab,
                                    std::uint64_t seed);
  static ToyModelParams zeros_like(const ToyModelParams& ref);
};

// Flat views over every parameter array, in a fixed order; used by the SGD
// update and by finite-difference checks.
std::vector<Eigen::Map<Vector>> param_views(ToyModelParams& p);

struct TrainConfig {
  double eta = 0.3;      // CTC weight in the total loss
  SolverConfig solver;   // epsilon fixed at 0.05 by default
  int epochs = 200;
  double learning_rate = 0.05;
  int batch_size = 1;
  std::uint64_t seed = 0;
  Index raw_dim = 10;  // raw acoustic input dimension fed to the encoder
  Index d_a = 8;       // encoder output dimension
};

void validate(const TrainConfig& cfg);

struct LossParts {
  double total = 0.0;
  double ctc = 0.0;
  double align = 0.0;
  double uot = 0.0;
  bool solver_converged = true;
  bool ctc_feasible = true;
};

// Raw inputs for an instance: the acoustic features pushed through a fixed
// random distortion map derived from cfg.seed (shared across the dataset).
FeatureSequence raw_inputs(const SyntheticInstance& inst, const TrainConfig& cfg);

// Transport plan on the current cost matrix (encoder -> projection -> cosine
// cost -> solve_uot with uniform marginals). This is the plan total_loss and
// grad_params freeze.
TransportPlan solve_alignment_plan(const SyntheticInstance& inst,
                                   const ToyModelParams& params, const TrainConfig& cfg);

// total = eta * ctc + (1 - eta) * (align + uot), with the transport plan
// solved on the current cost matrix and treated as a constant.
LossParts total_loss(const SyntheticInstance& inst, const ToyModelParams& params,
                     const TrainConfig& cfg);

// Same losses evaluated against a frozen plan (the stop-gradient surface
// that grad_params differentiates).
LossParts loss_with_plan(const SyntheticInstance& inst, const ToyModelParams& params,
                         const TrainConfig& cfg, const TransportPlan& plan);

// Analytic reverse-mode gradients of total_loss with the plan held constant.
// Returned in a ToyModelParams-shaped container.
ToyModelParams grad_params(const SyntheticInstance& inst, const ToyModelParams& params,
                           const TrainConfig& cfg);

struct EpochStats {
  double total = 0.0;
  double ctc = 0.0;
  double align = 0.0;
  double uot = 0.0;
  double dev_token_error = 0.0;
};

struct TrainResult {
  ToyModelParams params;
  std::vector<EpochStats> history;
};

// Plain SGD; deterministic given cfg.seed. Instances past the 80% mark form
// the held-out split (the whole set doubles as dev when fewer than five).
TrainResult train(const std::vector<SyntheticInstance>& dataset, const TrainConfig& cfg);

// Same, continuing from the given parameters (e.g. a CTC-pretrained encoder).
TrainResult train(const std::vector<SyntheticInstance>& dataset, const TrainConfig& cfg,
                  ToyModelParams initial);

// Levenshtein distance divided by max(1, |ref|).
double token_error_rate(const LabelSequence& hyp, const LabelSequence& ref);

}  // namespace uot
