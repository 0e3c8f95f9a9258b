#pragma once

#include "uot/common.hpp"

#include <vector>

namespace uot {

enum class Side { Acoustic, Linguistic };

enum class Metric { CosineDistance, SquaredEuclidean };

// Norms at or below this are treated as zero rows.
inline constexpr double kTinyNorm = 1e-12;

// A length-T sequence of real feature vectors, one per row.
struct FeatureSequence {
  Matrix data;  // length x dim
  Side side = Side::Acoustic;

  Index length() const { return data.rows(); }
  Index dim() const { return data.cols(); }
};

// Throws ShapeError / DomainError if the sequence is empty or non-finite.
void validate(const FeatureSequence& f);

// Affine dimension-matching map, row -> row * weight + bias.
struct ProjectionParams {
  Matrix weight;  // d_a x d_l
  Vector bias;    // d_l
};

struct CostMatrix {
  Matrix values;  // m x n, nonnegative
  Metric metric = Metric::CosineDistance;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

FeatureSequence project_features(const FeatureSequence& a, const ProjectionParams& p);

struct NormalizeResult {
  FeatureSequence features;
  std::vector<bool> zero_rows;  // rows whose norm was <= kTinyNorm
};

// Unit-normalizes each row; degenerate rows come back all-zero and flagged.
NormalizeResult normalize_rows(const FeatureSequence& f);

// values[i][j] = 1 - cos(h_i, l_j) for CosineDistance (zero-norm rows cost 1),
// ||h_i - l_j||^2 for SquaredEuclidean.
CostMatrix cost_matrix(const FeatureSequence& h, const FeatureSequence& l, Metric metric);

}  // namespace uot
