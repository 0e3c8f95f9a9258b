#pragma once

#include "uot/common.hpp"
#include "uot/geometry.hpp"
#include "uot/solver.hpp"

#include <utility>

namespace uot {

// Blank token lives at vocabulary index 0 (shared with the CTC module).
inline constexpr int kBlankIndex = 0;

// Residual adapter: A + LN_out(FC_l2a(LN_in(H))).
struct AdapterParams {
  Matrix fc_l2a_weight;  // d_l x d_a
  Vector fc_l2a_bias;    // d_a
  Vector ln_in_gain, ln_in_bias;    // d_l
  Vector ln_out_gain, ln_out_bias;  // d_a
};

struct PredictionHead {
  Matrix weight;  // d_a x V
  Vector bias;    // V

  Index vocab_size() const { return weight.cols(); }
};

enum class MarginalPreset { A2L, L2A, Balanced, Free };

// gamma^T H: row j of the output is sum_i gamma_ij h_i.
FeatureSequence project_to_linguistic(const TransportPlan& plan, const FeatureSequence& h);
FeatureSequence project_to_linguistic(const Matrix& gamma, const FeatureSequence& h);

// Column-mass-normalized variant, for visualization only.
FeatureSequence project_to_linguistic_normalized(const Matrix& gamma, const FeatureSequence& h);

// sum_j (1 - cos(l_proj_j, l_j)); zero-norm rows contribute 1.
double alignment_loss(const FeatureSequence& l_proj, const FeatureSequence& l);

FeatureSequence adapter_forward(const FeatureSequence& a, const FeatureSequence& h,
                                const AdapterParams& p);

// Per-position layer norm over the feature dimension, variance epsilon 1e-5.
Matrix layer_norm(const Matrix& x, const Vector& gain, const Vector& bias);

// Softmax(A_tilde W + b): each row a probability distribution over the vocabulary.
Matrix predict(const FeatureSequence& a_tilde, const PredictionHead& head);

// (lambda1, lambda2) pairs for the directional presets.
std::pair<double, double> preset_marginals(MarginalPreset mode);

}  // namespace uot
