#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "afclip/types.hpp"

namespace afclip {

// Trainable attention adapter shared by every (block, window) stream.
// No biases, no residual path, no normalization.
struct AdapterParams {
  Matrix wq;  // d x inner
  Matrix wk;  // d x inner
  Matrix wv;  // d x inner
  Matrix wo;  // inner x d
  int heads = 1;

  int token_dim() const { return static_cast<int>(wq.rows()); }
  int inner_dim() const { return static_cast<int>(wq.cols()); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(wq.size() + wk.size() + wv.size() + wo.size());
  }

  void validate() const {
    require(inner_dim() >= 1 && token_dim() >= 1, "adapter: dimensions must be positive");
    require(wk.rows() == wq.rows() && wv.rows() == wq.rows() && wk.cols() == wq.cols() &&
                wv.cols() == wq.cols() && wo.rows() == wq.cols() && wo.cols() == wq.rows(),
            "adapter: inconsistent projection shapes");
    require(heads >= 1 && inner_dim() % heads == 0,
            "adapter: inner width must be divisible by head count");
    require(wq.allFinite() && wk.allFinite() && wv.allFinite() && wo.allFinite(),
            "adapter: non-finite parameters");
  }
};

struct AdapterGrads {
  Matrix wq, wk, wv, wo;

  static AdapterGrads zeros_like(const AdapterParams& p) {
    return {Matrix::Zero(p.wq.rows(), p.wq.cols()), Matrix::Zero(p.wk.rows(), p.wk.cols()),
            Matrix::Zero(p.wv.rows(), p.wv.cols()), Matrix::Zero(p.wo.rows(), p.wo.cols())};
  }
  AdapterGrads& operator+=(const AdapterGrads& o) {
    wq += o.wq;
    wk += o.wk;
    wv += o.wv;
    wo += o.wo;
    return *this;
  }
};

// Scaled Gaussian init: input projections ~ N(0, 1/d), output ~ N(0, 1/inner).
inline AdapterParams init_adapter(int token_dim, int inner_dim, std::uint64_t seed, int heads = 1) {
  require(token_dim >= 1 && inner_dim >= 1, "init_adapter: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  const auto draw = [&](int rows, int cols, double scale) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * dist(rng);
    return m;
  };
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(token_dim));
  const double out_scale = 1.0 / std::sqrt(static_cast<double>(inner_dim));
  AdapterParams p{draw(token_dim, inner_dim, in_scale), draw(token_dim, inner_dim, in_scale),
                  draw(token_dim, inner_dim, in_scale), draw(inner_dim, token_dim, out_scale),
                  heads};
  p.validate();
  return p;
}

// Intermediate values kept for the backward pass.
struct AdapterTrace {
  Matrix input;
  Matrix q, k, v;
  std::vector<Matrix> attention;  // per head, rows sum to 1
  Matrix mixed;                   // concatenated head outputs, before W_O
};

namespace detail {

inline Matrix row_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

}  // namespace detail

inline Matrix adapt(const Matrix& tokens, const AdapterParams& params, AdapterTrace* trace) {
  require(tokens.cols() == params.token_dim(),
          "adapt: token width " + std::to_string(tokens.cols()) + " != adapter width " +
              std::to_string(params.token_dim()));
  const int head_dim = params.inner_dim() / params.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Matrix q = tokens * params.wq;
  Matrix k = tokens * params.wk;
  Matrix v = tokens * params.wv;
  Matrix mixed(tokens.rows(), params.inner_dim());
  std::vector<Matrix> attention;
  attention.reserve(static_cast<std::size_t>(params.heads));
  for (int h = 0; h < params.heads; ++h) {
    const auto cols = Eigen::seqN(h * head_dim, head_dim);
    Matrix a = detail::row_softmax(scale * (q(Eigen::all, cols) * k(Eigen::all, cols).transpose()));
    mixed(Eigen::all, cols) = a * v(Eigen::all, cols);
    attention.push_back(std::move(a));
  }
  Matrix out = mixed * params.wo;
  check_finite(out, "adapter output");
  if (trace != nullptr) {
    trace->input = tokens;
    trace->q = std::move(q);
    trace->k = std::move(k);
    trace->v = std::move(v);
    trace->attention = std::move(attention);
    trace->mixed = std::move(mixed);
  }
  return out;
}

inline Matrix adapt(const Matrix& tokens, const AdapterParams& params) {
  return adapt(tokens, params, nullptr);
}

// Backpropagates grad_output (same shape as the adapter output). Parameter
// gradients are accumulated into grads; returns the gradient w.r.t. the tokens.
inline Matrix adapt_backward(const AdapterTrace& trace, const AdapterParams& params,
                             const Matrix& grad_output, AdapterGrads& grads) {
  const int head_dim = params.inner_dim() / params.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  grads.wo.noalias() += trace.mixed.transpose() * grad_output;
  const Matrix grad_mixed = grad_output * params.wo.transpose();
  Matrix grad_q(trace.q.rows(), trace.q.cols());
  Matrix grad_k(trace.k.rows(), trace.k.cols());
  Matrix grad_v(trace.v.rows(), trace.v.cols());
  for (int h = 0; h < params.heads; ++h) {
    const auto cols = Eigen::seqN(h * head_dim, head_dim);
    const Matrix& a = trace.attention[static_cast<std::size_t>(h)];
    const Matrix gm = grad_mixed(Eigen::all, cols);
    const Matrix grad_a = gm * trace.v(Eigen::all, cols).transpose();
    grad_v(Eigen::all, cols) = a.transpose() * gm;
    const Eigen::VectorXd row_dot = (grad_a.array() * a.array()).rowwise().sum();
    const Matrix grad_logits =
        (a.array() * (grad_a.colwise() - row_dot).array()).matrix() * scale;
    grad_q(Eigen::all, cols) = grad_logits * trace.k(Eigen::all, cols);
    grad_k(Eigen::all, cols) = grad_logits.transpose() * trace.q(Eigen::all, cols);
  }
  grads.wq.noalias() += trace.input.transpose() * grad_q;
  grads.wk.noalias() += trace.input.transpose() * grad_k;
  grads.wv.noalias() += trace.input.transpose() * grad_v;
  return grad_q * params.wq.transpose() + grad_k * params.wk.transpose() +
         grad_v * params.wv.transpose();
}

}  // namespace afclip
