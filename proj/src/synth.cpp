#include "uot/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace uot {

namespace {

Matrix draw_codebook(std::mt19937_64& rng, int vocab_size, int embed_dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix codebook(vocab_size, embed_dim);
  for (Index i = 0; i < codebook.rows(); ++i) {
    for (Index j = 0; j < codebook.cols(); ++j) {
      codebook(i, j) = normal(rng);
    }
    const double norm = codebook.row(i).norm();
    if (norm > kTinyNorm) {
      codebook.row(i) /= norm;
    }
  }
  return codebook;
}

std::vector<int> draw_labels(std::mt19937_64& rng, int vocab_size, int num_tokens) {
  const int symbols = vocab_size - 1;  // blank excluded
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(num_tokens));
  if (symbols >= num_tokens) {
    // Distinct labels keep linguistic columns distinguishable.
    std::vector<int> pool(static_cast<std::size_t>(symbols));
    std::iota(pool.begin(), pool.end(), 1);
    for (int k = 0; k < num_tokens; ++k) {
      std::uniform_int_distribution<int> pick(k, symbols - 1);
      std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(pick(rng))]);
      labels.push_back(pool[static_cast<std::size_t>(k)]);
    }
  } else {
    std::uniform_int_distribution<int> pick(1, symbols);
    for (int k = 0; k < num_tokens; ++k) {
      int tok = pick(rng);
      while (symbols > 1 && !labels.empty() && tok == labels.back()) {
        tok = pick(rng);
      }
      labels.push_back(tok);
    }
  }
  return labels;
}

SyntheticInstance generate_body(const SynthSpec& spec, const Matrix& codebook,
                                std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> run_len(spec.frames_per_token.first,
                                             spec.frames_per_token.second);
  const int dim = spec.embed_dim;
  const int n = spec.num_tokens;

  SyntheticInstance inst;
  inst.labels.tokens = draw_labels(rng, spec.vocab_size, n);

  inst.linguistic.side = Side::Linguistic;
  inst.linguistic.data.resize(n, dim);
  for (int j = 0; j < n; ++j) {
    inst.linguistic.data.row(j) = codebook.row(inst.labels.tokens[static_cast<std::size_t>(j)]);
  }

  auto noise_row = [&](double scale) {
    Vector r(dim);
    for (Index k = 0; k < dim; ++k) {
      r(k) = scale * normal(rng);
    }
    return r;
  };

  std::vector<Vector> content;
  std::vector<FrameTruth> content_truth;
  for (int j = 0; j < n; ++j) {
    const Vector emb = inst.linguistic.data.row(j).transpose();
    const int len = run_len(rng);
    for (int f = 0; f < len; ++f) {
      content.push_back(emb + noise_row(spec.noise_scale));
      content_truth.push_back({MatchKind::Token, j, -1, 0.0});
    }
    if (j + 1 < n) {
      const Vector next = inst.linguistic.data.row(j + 1).transpose();
      for (int k = 1; k <= spec.transition_width; ++k) {
        const double t = static_cast<double>(k) / (spec.transition_width + 1);
        content.push_back((1.0 - t) * emb + t * next + noise_row(spec.noise_scale));
        content_truth.push_back({MatchKind::Pair, j, j + 1, t});
      }
    }
  }

  const auto m_content = static_cast<int>(content.size());
  const int n_null = static_cast<int>(std::llround(
      spec.noise_frame_rate / (1.0 - spec.noise_frame_rate) * m_content));
  const int m = m_content + n_null;

  // Pick which final positions hold NULL frames.
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  for (int k = 0; k < n_null; ++k) {
    std::uniform_int_distribution<int> pick(k, m - 1);
    std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(pick(rng))]);
  }
  std::vector<bool> is_null(static_cast<std::size_t>(m), false);
  for (int k = 0; k < n_null; ++k) {
    is_null[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;
  }

  inst.acoustic.side = Side::Acoustic;
  inst.acoustic.data.resize(m, dim);
  inst.truth.resize(static_cast<std::size_t>(m));
  int next_content = 0;
  for (int i = 0; i < m; ++i) {
    if (is_null[static_cast<std::size_t>(i)]) {
      inst.acoustic.data.row(i) = noise_row(spec.noise_scale).transpose();
      inst.truth[static_cast<std::size_t>(i)] = {MatchKind::Null, -1, -1, 0.0};
    } else {
      inst.acoustic.data.row(i) = content[static_cast<std::size_t>(next_content)].transpose();
      inst.truth[static_cast<std::size_t>(i)] =
          content_truth[static_cast<std::size_t>(next_content)];
      ++next_content;
    }
  }
  return inst;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (k + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  return x;
}

}  // namespace

void validate(const SynthSpec& spec) {
  if (spec.vocab_size < 2) {
    throw ConfigError("synth spec: vocab_size must be >= 2");
  }
  if (spec.num_tokens < 1) {
    throw ConfigError("synth spec: num_tokens must be >= 1");
  }
  if (spec.frames_per_token.first < 1 ||
      spec.frames_per_token.second < spec.frames_per_token.first) {
    throw ConfigError("synth spec: frames_per_token range must satisfy 1 <= min <= max");
  }
  if (spec.transition_width < 0) {
    throw ConfigError("synth spec: transition_width must be >= 0");
  }
  if (spec.noise_frame_rate < 0.0 || spec.noise_frame_rate >= 1.0) {
    throw ConfigError("synth spec: noise_frame_rate must lie in [0, 1)");
  }
  if (spec.embed_dim < 1) {
    throw ConfigError("synth spec: embed_dim must be >= 1");
  }
  if (spec.noise_scale < 0.0) {
    throw ConfigError("synth spec: noise_scale must be >= 0");
  }
}

SyntheticInstance generate_instance(const SynthSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  const Matrix codebook = draw_codebook(rng, spec.vocab_size, spec.embed_dim);
  return generate_body(spec, codebook, rng);
}

std::vector<SyntheticInstance> generate_dataset(const SynthSpec& spec, int count) {
  validate(spec);
  if (count < 1) {
    throw ConfigError("generate_dataset: count must be >= 1");
  }
  std::mt19937_64 seed_rng(spec.seed);
  const Matrix codebook = draw_codebook(seed_rng, spec.vocab_size, spec.embed_dim);
  std::vector<SyntheticInstance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(k)));
    out.push_back(generate_body(spec, codebook, rng));
  }
  return out;
}

Matrix uniform_alignment(Index m, Index n, double window) {
  if (m < n || n < 1) {
    throw ShapeError("uniform_alignment: requires m >= n >= 1");
  }
  if (!(window > 0.0)) {
    throw ConfigError("uniform_alignment: window must be > 0");
  }
  Matrix plan(m, n);
  const double inv2w2 = 1.0 / (2.0 * window * window);
  for (Index i = 0; i < m; ++i) {
    const auto center = static_cast<double>(i * n / m);  // floor(i*n/m)
    double sum = 0.0;
    for (Index j = 0; j < n; ++j) {
      const double d = static_cast<double>(j) - center;
      plan(i, j) = std::exp(-d * d * inv2w2);
      sum += plan(i, j);
    }
    plan.row(i) /= sum * static_cast<double>(m);  // row mass 1/m
  }
  return plan;
}

DetectionResult detection_metrics(const Matrix& gamma, const std::vector<FrameTruth>& truth,
                                  double mass_threshold) {
  if (!(mass_threshold > 0.0) || !(mass_threshold < 1.0)) {
    throw ConfigError("detection_metrics: mass_threshold must lie in (0, 1)");
  }
  const Index m = gamma.rows(), n = gamma.cols();
  if (static_cast<Index>(truth.size()) != m) {
    throw ShapeError("detection_metrics: truth length does not match plan rows");
  }

  const double total = gamma.sum();
  const double row_thresh = mass_threshold * total / static_cast<double>(m);
  long predicted = 0, hits = 0, true_pairs = 0;
  for (Index i = 0; i < m; ++i) {
    const FrameTruth& ft = truth[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j) {
      const bool is_true = ft.includes(static_cast<int>(j));
      const bool is_pred = gamma(i, j) > row_thresh;
      true_pairs += is_true;
      predicted += is_pred;
      hits += (is_true && is_pred);
    }
  }

  DetectionResult res;
  if (predicted == 0) {
    res.precision = 1.0;
    res.empty_prediction = true;
  } else {
    res.precision = static_cast<double>(hits) / static_cast<double>(predicted);
  }
  res.recall = true_pairs == 0
                   ? 1.0
                   : static_cast<double>(hits) / static_cast<double>(true_pairs);

  const double col_thresh = mass_threshold * total / static_cast<double>(n);
  Index covered = 0;
  for (Index j = 0; j < n; ++j) {
    covered += gamma.col(j).sum() > col_thresh;
  }
  res.token_coverage = static_cast<double>(covered) / static_cast<double>(n);
  return res;
}

DistortResult distort_features(const FeatureSequence& f, Index raw_dim, std::uint64_t seed) {
  if (raw_dim < f.dim()) {
    throw ShapeError("distort_features: raw_dim must be >= feature dim");
  }
  std::mt19937_64 rng(mix_seed(seed, 0x5eedull));
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix map(f.dim(), raw_dim);
  for (Index i = 0; i < map.rows(); ++i) {
    for (Index j = 0; j < map.cols(); ++j) {
      map(i, j) = normal(rng) / std::sqrt(static_cast<double>(f.dim()));
    }
  }
  DistortResult res;
  res.raw.side = f.side;
  res.raw.data = f.data * map;
  res.undo.weight = map.completeOrthogonalDecomposition().pseudoInverse();
  res.undo.bias = Vector::Zero(f.dim());
  return res;
}

}  // namespace uot
