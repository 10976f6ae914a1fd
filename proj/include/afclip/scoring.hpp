#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "afclip/imaging.hpp"
#include "afclip/types.hpp"

namespace afclip {

struct ScoreConfig {
  double tau = 0.07;
  double smooth_sigma = 4.0;  // output pixels
  int output_size = 518;

  void validate() const {
    require(tau > 0.0, "score config: tau must be positive");
    require(smooth_sigma >= 0.0, "score config: smooth_sigma must be non-negative");
    require(output_size >= 1, "score config: output_size must be positive");
  }
};

struct AnomalyResult {
  double image_score = 0.0;  // p_CLS
  Matrix patch_probs;        // grid_side x grid_side
  Matrix pixel_map;          // output_size x output_size
};

// Per-token alignment scores of one stream, already divided by tau.
struct TokenScores {
  Vector normal;
  Vector abnormal;
};

// Cosine of each row of z with a unit vector; zero rows score 0.
inline Vector row_cosines(const Matrix& z, const Vector& unit) {
  Vector out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double norm = z.row(i).norm();
    out(i) = norm > 0.0 ? z.row(i).dot(unit) / norm : 0.0;
  }
  return out;
}

// d cos(z_i, unit) / d z_i for every row; zero rows get a zero gradient.
inline Matrix row_cosine_grad(const Matrix& z, const Vector& unit) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double norm = z.row(i).norm();
    if (norm == 0.0) {
      out.row(i).setZero();
      continue;
    }
    const RowVector zhat = z.row(i) / norm;
    const double c = zhat.dot(unit);
    out.row(i) = (unit.transpose() - c * zhat) / norm;
  }
  return out;
}

inline TokenScores token_similarities(const Matrix& z, const Vector& t_normal,
                                      const Vector& t_abnormal, double tau) {
  require(tau > 0.0, "token_similarities: tau must be positive");
  require(z.cols() == t_normal.size() && z.cols() == t_abnormal.size(),
          "token_similarities: feature width mismatch");
  return {row_cosines(z, t_normal) / tau, row_cosines(z, t_abnormal) / tau};
}

// Summed abnormal-minus-normal score over streams; p_i = sigmoid of this.
inline Vector anomaly_logits(const std::vector<TokenScores>& streams) {
  require(!streams.empty(), "anomaly_probabilities: no score streams");
  Vector logit = Vector::Zero(streams.front().abnormal.size());
  for (const auto& s : streams) {
    require(s.abnormal.size() == logit.size() && s.normal.size() == logit.size(),
            "anomaly_probabilities: stream token counts differ");
    logit += s.abnormal - s.normal;
  }
  return logit;
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Two-state softmax over the stream-summed scores, per token.
inline Vector anomaly_probabilities(const std::vector<TokenScores>& streams) {
  const Vector logit = anomaly_logits(streams);
  return logit.unaryExpr([](double x) { return stable_sigmoid(x); });
}

// Reshapes the patch entries (rows 1..N) of a per-token vector into the grid.
inline Matrix patch_grid(const Vector& per_token, int grid_side) {
  require(per_token.size() == static_cast<Eigen::Index>(grid_side) * grid_side + 1,
          "patch_grid: token count does not match grid");
  Matrix grid(grid_side, grid_side);
  for (int h = 0; h < grid_side; ++h)
    for (int w = 0; w < grid_side; ++w) grid(h, w) = per_token(1 + h * grid_side + w);
  return grid;
}

// Bilinear upsample to output_size followed by Gaussian smoothing.
inline Matrix upsample_and_smooth(const Matrix& grid, const ScoreConfig& config) {
  config.validate();
  return gaussian_blur(bilinear_resize(grid, config.output_size, config.output_size),
                       config.smooth_sigma);
}

// Pixel map for a probability grid: upsample, smooth, clip to [0, 1].
inline Matrix render_score_map(const Matrix& patch_probs, const ScoreConfig& config) {
  return upsample_and_smooth(patch_probs, config).cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace afclip
