#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "afclip/scoring.hpp"
#include "afclip/types.hpp"

namespace afclip {

// Binary focal loss parameters. Without alpha both classes weigh 1; with
// alpha the positive class weighs alpha and the negative class 1 - alpha.
struct FocalParams {
  double gamma = 2.0;
  std::optional<double> alpha;

  double weight(bool positive) const {
    if (!alpha) return 1.0;
    return positive ? *alpha : 1.0 - *alpha;
  }
};

struct LossConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double focal_gamma = 2.0;
  std::optional<double> cls_alpha;   // symmetric by default
  std::optional<double> seg_alpha = 0.25;

  FocalParams cls_focal() const { return {focal_gamma, cls_alpha}; }
  FocalParams seg_focal() const { return {focal_gamma, seg_alpha}; }

  void validate() const {
    require(lambda1 >= 0.0 && lambda2 >= 0.0, "loss config: lambdas must be non-negative");
    require(focal_gamma >= 0.0, "loss config: focal gamma must be non-negative");
    for (const auto& a : {cls_alpha, seg_alpha})
      require(!a || (*a > 0.0 && *a < 1.0), "loss config: focal alpha must lie in (0, 1)");
  }
};

inline constexpr double kProbabilityFloor = 1e-12;

struct ValueGrad {
  double value = 0.0;
  double grad = 0.0;
};

// Focal loss of a probability p against a target in [0, 1]; binary targets
// give the usual -alpha_t (1 - p_t)^gamma log p_t. grad is d/dp.
inline ValueGrad focal_prob(double p, double target, const FocalParams& params) {
  const auto side = [&](double pt, bool positive) {
    const double clamped = std::clamp(pt, kProbabilityFloor, 1.0);
    const double w = params.weight(positive);
    const double one_minus = 1.0 - pt;
    const double value = -w * std::pow(one_minus, params.gamma) * std::log(clamped);
    // d/dpt; the log term stops contributing once clamped.
    double d = 0.0;
    if (params.gamma > 0.0 && one_minus > 0.0)
      d += w * params.gamma * std::pow(one_minus, params.gamma - 1.0) * std::log(clamped);
    if (pt > kProbabilityFloor) d -= w * std::pow(one_minus, params.gamma) / pt;
    return ValueGrad{value, d};
  };
  ValueGrad out;
  if (target > 0.0) {
    const auto pos = side(p, true);
    out.value += target * pos.value;
    out.grad += target * pos.grad;
  }
  if (target < 1.0) {
    const auto neg = side(1.0 - p, false);
    out.value += (1.0 - target) * neg.value;
    out.grad -= (1.0 - target) * neg.grad;
  }
  return out;
}

namespace detail {

// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace detail

// Focal loss on the logit x with p = sigmoid(x); grad is d/dx. Stays finite
// and keeps a useful gradient when p saturates.
inline ValueGrad focal_logit(double x, double target, const FocalParams& params) {
  const auto side = [&](double signed_x, bool positive) {
    // p_t = sigmoid(signed_x)
    const double log_pt = -detail::softplus(-signed_x);
    const double one_minus = stable_sigmoid(-signed_x);
    const double pt = stable_sigmoid(signed_x);
    const double w = params.weight(positive);
    const double mod = std::pow(one_minus, params.gamma);
    const double value = -w * mod * log_pt;
    // d/d(signed_x) = -w [ -gamma (1-pt)^gamma pt log pt + (1-pt)^(gamma+1) ]
    const double d = -w * (-params.gamma * mod * pt * log_pt + mod * one_minus);
    return ValueGrad{value, d};
  };
  ValueGrad out;
  if (target > 0.0) {
    const auto pos = side(x, true);
    out.value += target * pos.value;
    out.grad += target * pos.grad;
  }
  if (target < 1.0) {
    const auto neg = side(-x, false);
    out.value += (1.0 - target) * neg.value;
    out.grad -= (1.0 - target) * neg.grad;
  }
  return out;
}

inline double classification_loss(double p_cls, int label, const LossConfig& config) {
  require(p_cls >= 0.0 && p_cls <= 1.0, "classification_loss: probability outside [0, 1]");
  return focal_prob(p_cls, label != 0 ? 1.0 : 0.0, config.cls_focal()).value;
}

// Block max-pooling onto an rows x cols grid. Every native pixel falls in at
// least one cell, so a positive pixel always produces a positive cell.
inline Matrix resize_mask(const Matrix& mask, int rows, int cols) {
  require(rows >= 1 && cols >= 1 && mask.rows() >= 1 && mask.cols() >= 1,
          "resize_mask: empty mask or grid");
  Matrix out(rows, cols);
  const auto lo = [](int i, int out_n, Eigen::Index in_n) {
    return static_cast<Eigen::Index>(i) * in_n / out_n;
  };
  const auto hi = [](int i, int out_n, Eigen::Index in_n) {
    return (static_cast<Eigen::Index>(i + 1) * in_n + out_n - 1) / out_n;
  };
  for (int h = 0; h < rows; ++h) {
    const auto r0 = lo(h, rows, mask.rows());
    const auto r1 = std::max(r0 + 1, hi(h, rows, mask.rows()));
    for (int w = 0; w < cols; ++w) {
      const auto c0 = lo(w, cols, mask.cols());
      const auto c1 = std::max(c0 + 1, hi(w, cols, mask.cols()));
      out(h, w) = mask.block(r0, c0, r1 - r0, c1 - c0).maxCoeff() > 0.5 ? 1.0 : 0.0;
    }
  }
  return out;
}

struct SegmentationLoss {
  double value = 0.0;
  Matrix grad;  // d value / d input (probabilities or logits, per call)
};

// Mean per-cell focal loss plus mean absolute error over the patch grid.
inline SegmentationLoss segmentation_loss(const Matrix& probs, const Matrix& target,
                                          const LossConfig& config) {
  require(probs.rows() == target.rows() && probs.cols() == target.cols(),
          "segmentation_loss: prediction and target shapes differ");
  const auto n = static_cast<double>(probs.size());
  SegmentationLoss out{0.0, Matrix(probs.rows(), probs.cols())};
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double p = probs.data()[i];
    const double m = target.data()[i];
    const auto focal = focal_prob(p, m, config.seg_focal());
    const double diff = p - m;
    out.value += (focal.value + std::abs(diff)) / n;
    out.grad.data()[i] = (focal.grad + (diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0)) / n;
  }
  return out;
}

// Same loss evaluated from logits (p = sigmoid(logit)); grad is w.r.t. logits.
inline SegmentationLoss segmentation_loss_from_logits(const Matrix& logits, const Matrix& target,
                                                      const LossConfig& config) {
  require(logits.rows() == target.rows() && logits.cols() == target.cols(),
          "segmentation_loss: prediction and target shapes differ");
  const auto n = static_cast<double>(logits.size());
  SegmentationLoss out{0.0, Matrix(logits.rows(), logits.cols())};
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double x = logits.data()[i];
    const double m = target.data()[i];
    const double p = stable_sigmoid(x);
    const auto focal = focal_logit(x, m, config.seg_focal());
    const double diff = p - m;
    const double sign = diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0;
    out.value += (focal.value + std::abs(diff)) / n;
    out.grad.data()[i] = (focal.grad + sign * p * (1.0 - p)) / n;
  }
  return out;
}

struct AlignmentLoss {
  double value = 0.0;
  bool skipped = false;        // no abnormal or no normal patches
  std::vector<Matrix> grads;   // per stream, same shape as the input features
};

// Hinge between the mean normal-abnormal cosine and the pooled within-group
// cosine (self-pairs included), averaged over streams. Each stream holds the
// pooled patch features of the batch's anomalous images; abnormal[i] flags row i.
// The double sums are evaluated through group sums of unit vectors, so the
// cost is linear in the patch count.
inline AlignmentLoss patch_alignment_loss(const std::vector<Matrix>& streams,
                                          const std::vector<int>& abnormal) {
  require(!streams.empty(), "patch_alignment_loss: no streams");
  AlignmentLoss out;
  std::size_t n_abnormal = 0;
  for (int a : abnormal) n_abnormal += a != 0 ? 1 : 0;
  const std::size_t n_normal = abnormal.size() - n_abnormal;
  for (const auto& s : streams) {
    require(s.rows() == static_cast<Eigen::Index>(abnormal.size()),
            "patch_alignment_loss: label count does not match patch count");
    out.grads.push_back(Matrix::Zero(s.rows(), s.cols()));
  }
  if (n_abnormal == 0 || n_normal == 0) {
    out.skipped = true;
    return out;
  }
  const double nn = static_cast<double>(n_normal);
  const double na = static_cast<double>(n_abnormal);
  const double cross_scale = 1.0 / (nn * na);
  const double within_scale = 1.0 / (nn * nn + na * na);
  const double stream_scale = 1.0 / static_cast<double>(streams.size());

  for (std::size_t s = 0; s < streams.size(); ++s) {
    const Matrix& z = streams[s];
    Vector norms(z.rows());
    Matrix unit(z.rows(), z.cols());
    RowVector sum_n = RowVector::Zero(z.cols());
    RowVector sum_a = RowVector::Zero(z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      norms(i) = z.row(i).norm();
      unit.row(i) = norms(i) > 0.0 ? RowVector(z.row(i) / norms(i)) : RowVector::Zero(z.cols());
      (abnormal[static_cast<std::size_t>(i)] != 0 ? sum_a : sum_n) += unit.row(i);
    }
    const double hinge = cross_scale * sum_n.dot(sum_a) -
                         within_scale * (sum_n.squaredNorm() + sum_a.squaredNorm());
    if (hinge <= 0.0) continue;
    out.value += stream_scale * hinge;
    const RowVector g_n = stream_scale * (cross_scale * sum_a - 2.0 * within_scale * sum_n);
    const RowVector g_a = stream_scale * (cross_scale * sum_n - 2.0 * within_scale * sum_a);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      if (norms(i) == 0.0) continue;
      const RowVector& g = abnormal[static_cast<std::size_t>(i)] != 0 ? g_a : g_n;
      // project out the radial component of the unit-vector gradient
      out.grads[s].row(i) = (g - g.dot(unit.row(i)) * unit.row(i)) / norms(i);
    }
  }
  return out;
}

struct LossParts {
  double cls = 0.0;
  double seg = 0.0;
  double pal = 0.0;
};

inline double total_loss(const LossParts& parts, const LossConfig& config) {
  return parts.cls + config.lambda1 * parts.seg + config.lambda2 * parts.pal;
}

}  // namespace afclip
