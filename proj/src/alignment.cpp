#include "uot/alignment.hpp"

#include <cmath>
#include <string>

namespace uot {

namespace {

constexpr double kLnEps = 1e-5;

void check_adapter_shapes(const FeatureSequence& a, const FeatureSequence& h,
                          const AdapterParams& p) {
  if (a.length() != h.length()) {
    throw ShapeError("adapter_forward: A and H lengths differ");
  }
  const Index d_l = h.dim(), d_a = a.dim();
  if (p.fc_l2a_weight.rows() != d_l || p.fc_l2a_weight.cols() != d_a ||
      p.fc_l2a_bias.size() != d_a || p.ln_in_gain.size() != d_l ||
      p.ln_in_bias.size() != d_l || p.ln_out_gain.size() != d_a ||
      p.ln_out_bias.size() != d_a) {
    throw ShapeError("adapter_forward: parameter shapes inconsistent with d_a=" +
                     std::to_string(d_a) + ", d_l=" + std::to_string(d_l));
  }
}

}  // namespace

FeatureSequence project_to_linguistic(const Matrix& gamma, const FeatureSequence& h) {
  if (gamma.rows() != h.length()) {
    throw ShapeError("project_to_linguistic: plan has " + std::to_string(gamma.rows()) +
                     " rows but H has length " + std::to_string(h.length()));
  }
  FeatureSequence out;
  out.side = Side::Linguistic;
  out.data = gamma.transpose() * h.data;
  return out;
}

FeatureSequence project_to_linguistic(const TransportPlan& plan, const FeatureSequence& h) {
  return project_to_linguistic(plan.gamma, h);
}

FeatureSequence project_to_linguistic_normalized(const Matrix& gamma,
                                                 const FeatureSequence& h) {
  FeatureSequence out = project_to_linguistic(gamma, h);
  const Vector col = gamma.colwise().sum();
  for (Index j = 0; j < out.length(); ++j) {
    if (col(j) > kTinyNorm) {
      out.data.row(j) /= col(j);
    }
  }
  return out;
}

double alignment_loss(const FeatureSequence& l_proj, const FeatureSequence& l) {
  if (l_proj.length() != l.length() || l_proj.dim() != l.dim()) {
    throw ShapeError("alignment_loss: sequences must have equal length and dim");
  }
  double loss = 0.0;
  for (Index j = 0; j < l.length(); ++j) {
    const double np = l_proj.data.row(j).norm();
    const double nl = l.data.row(j).norm();
    if (np <= kTinyNorm || nl <= kTinyNorm) {
      loss += 1.0;
    } else {
      loss += 1.0 - l_proj.data.row(j).dot(l.data.row(j)) / (np * nl);
    }
  }
  return loss;
}

Matrix layer_norm(const Matrix& x, const Vector& gain, const Vector& bias) {
  const Index d = x.cols();
  Matrix out(x.rows(), d);
  for (Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().sum() / static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    out.row(i) =
        ((x.row(i).array() - mean) * inv * gain.transpose().array()) + bias.transpose().array();
  }
  return out;
}

FeatureSequence adapter_forward(const FeatureSequence& a, const FeatureSequence& h,
                                const AdapterParams& p) {
  check_adapter_shapes(a, h, p);
  const Matrix z0 = layer_norm(h.data, p.ln_in_gain, p.ln_in_bias);
  const Matrix z1 = (z0 * p.fc_l2a_weight).rowwise() + p.fc_l2a_bias.transpose();
  const Matrix z2 = layer_norm(z1, p.ln_out_gain, p.ln_out_bias);
  FeatureSequence out;
  out.side = a.side;
  out.data = a.data + z2;
  return out;
}

Matrix predict(const FeatureSequence& a_tilde, const PredictionHead& head) {
  if (head.vocab_size() < 2) {
    throw ShapeError("predict: vocabulary must hold blank plus at least one symbol");
  }
  if (a_tilde.dim() != head.weight.rows() || head.bias.size() != head.weight.cols()) {
    throw ShapeError("predict: head shapes inconsistent with input dim");
  }
  Matrix logits = (a_tilde.data * head.weight).rowwise() + head.bias.transpose();
  for (Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - mx).exp();
    logits.row(i) /= logits.row(i).sum();
  }
  return logits;
}

std::pair<double, double> preset_marginals(MarginalPreset mode) {
  switch (mode) {
    case MarginalPreset::A2L:
      return {0.5, 1.0};
    case MarginalPreset::L2A:
      return {1.0, 0.5};
    case MarginalPreset::Balanced:
      return {10.0, 10.0};
    case MarginalPreset::Free:
      return {0.0, 0.0};
  }
  throw ConfigError("preset_marginals: unknown preset");
}

}  // namespace uot
