#pragma once

#include "uot/common.hpp"
#include "uot/ctc.hpp"
#include "uot/geometry.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace uot {

struct SynthSpec {
  int vocab_size = 12;  // includes blank at index 0
  int num_tokens = 8;
  std::pair<int, int> frames_per_token = {3, 6};
  int transition_width = 0;        // frames blending adjacent tokens
  double noise_frame_rate = 0.0;   // fraction of NULL frames, in [0, 1)
  int embed_dim = 16;
  double noise_scale = 0.05;
  std::uint64_t seed = 0;
};

void validate(const SynthSpec& spec);

enum class MatchKind { Token, Pair, Null };

// Ground-truth annotation for one acoustic frame; token fields are 0-based
// positions into the linguistic sequence.
struct FrameTruth {
  MatchKind kind = MatchKind::Null;
  int token = -1;
  int token2 = -1;      // Pair only
  double weight = 0.0;  // Pair only: blend weight of token2

  bool includes(int j) const {
    switch (kind) {
      case MatchKind::Token:
        return j == token;
      case MatchKind::Pair:
        return j == token || j == token2;
      case MatchKind::Null:
        return false;
    }
    return false;
  }
};

struct SyntheticInstance {
  FeatureSequence acoustic;    // m x embed_dim
  FeatureSequence linguistic;  // n x embed_dim
  LabelSequence labels;        // n token ids
  std::vector<FrameTruth> truth;

  Index frames() const { return acoustic.length(); }
  Index tokens() const { return linguistic.length(); }
};

// Deterministic given spec.seed. Token embeddings come from a unit-normalized
// random codebook; every token position emits at least one frame.
SyntheticInstance generate_instance(const SynthSpec& spec);

// Instances sharing one codebook (drawn from spec.seed); instance k uses an
// independent stream derived from (spec.seed, k).
std::vector<SyntheticInstance> generate_dataset(const SynthSpec& spec, int count);

// Content-blind baseline: frame i centers a Gaussian (std dev `window`, in
// token units) at token floor(i*n/m); rows renormalized to mass 1/m.
Matrix uniform_alignment(Index m, Index n, double window);

struct DetectionResult {
  double precision = 1.0;
  double recall = 0.0;
  double token_coverage = 0.0;
  bool empty_prediction = false;  // precision reported as 1 by convention
};

// Pair (i, j) is predicted when gamma_ij > threshold * (total mass / m);
// token j is covered when its column mass exceeds threshold * (total mass / n).
DetectionResult detection_metrics(const Matrix& gamma, const std::vector<FrameTruth>& truth,
                                  double mass_threshold);

struct DistortResult {
  FeatureSequence raw;     // features pushed through a random full-rank map
  ProjectionParams undo;   // pseudo-inverse projection recovering the input
};

// Random linear distortion into raw_dim >= dim; project_features with `undo`
// recovers the original sequence.
DistortResult distort_features(const FeatureSequence& f, Index raw_dim, std::uint64_t seed);

}  // namespace uot
