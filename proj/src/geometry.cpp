#include "uot/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace uot {

void validate(const FeatureSequence& f) {
  if (f.data.rows() < 1 || f.data.cols() < 1) {
    throw ShapeError("feature sequence must have length >= 1 and dim >= 1");
  }
  if (!f.data.allFinite()) {
    throw DomainError("feature sequence contains non-finite entries");
  }
}

FeatureSequence project_features(const FeatureSequence& a, const ProjectionParams& p) {
  if (a.dim() != p.weight.rows()) {
    throw ShapeError("project_features: input dim " + std::to_string(a.dim()) +
                     " does not match weight rows " + std::to_string(p.weight.rows()));
  }
  if (p.bias.size() != p.weight.cols()) {
    throw ShapeError("project_features: bias size does not match weight cols");
  }
  FeatureSequence out;
  out.side = a.side;
  out.data = (a.data * p.weight).rowwise() + p.bias.transpose();
  return out;
}

NormalizeResult normalize_rows(const FeatureSequence& f) {
  NormalizeResult res;
  res.features.side = f.side;
  res.features.data = f.data;
  res.zero_rows.assign(static_cast<std::size_t>(f.length()), false);
  for (Index i = 0; i < f.length(); ++i) {
    const double norm = f.data.row(i).norm();
    if (norm > kTinyNorm) {
      res.features.data.row(i) /= norm;
    } else {
      res.features.data.row(i).setZero();
      res.zero_rows[static_cast<std::size_t>(i)] = true;
    }
  }
  return res;
}

CostMatrix cost_matrix(const FeatureSequence& h, const FeatureSequence& l, Metric metric) {
  if (h.dim() != l.dim()) {
    throw ShapeError("cost_matrix: dim mismatch, " + std::to_string(h.dim()) + " vs " +
                     std::to_string(l.dim()));
  }
  const Index m = h.length();
  const Index n = l.length();
  CostMatrix c;
  c.metric = metric;
  c.values.resize(m, n);
  if (metric == Metric::CosineDistance) {
    const NormalizeResult hn = normalize_rows(h);
    const NormalizeResult ln = normalize_rows(l);
    // 1 - <h_i, l_j> on unit rows; a degenerate row has no direction, cost 1.
    c.values = Matrix::Ones(m, n) - hn.features.data * ln.features.data.transpose();
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (hn.zero_rows[static_cast<std::size_t>(i)] ||
            ln.zero_rows[static_cast<std::size_t>(j)]) {
          c.values(i, j) = 1.0;
        } else {
          c.values(i, j) = std::clamp(c.values(i, j), 0.0, 2.0);
        }
      }
    }
  } else {
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < n; ++j) {
        c.values(i, j) = (h.data.row(i) - l.data.row(j)).squaredNorm();
      }
    }
  }
  return c;
}

}  // namespace uot
