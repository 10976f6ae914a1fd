#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "afclip/checkpoint.hpp"
#include "afclip/losses.hpp"
#include "afclip/model.hpp"

namespace afclip {

// One auxiliary training image with its native-resolution binary mask.
struct TrainingExample {
  Image image;
  Matrix mask;
  int label = 0;
};

struct StepRecord {
  int step = 0;
  LossParts parts;
  double total = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepRecord> log;
  int pal_skipped = 0;  // steps whose batch had no anomalous patch
};

// Adam over a fixed list of parameter matrices.
class Adam {
 public:
  Adam(std::vector<Matrix*> params, const TrainConfig& config)
      : params_(std::move(params)), config_(config) {
    for (const Matrix* p : params_) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }

  void step(const std::vector<const Matrix*>& grads, double learning_rate) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const Matrix& g = *grads[i];
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
      const Matrix m_hat = m_[i] / bc1;
      const Matrix v_hat = v_[i] / bc2;
      if (config_.weight_decay > 0.0) *params_[i] *= 1.0 - learning_rate * config_.weight_decay;
      params_[i]->array() -=
          learning_rate * m_hat.array() / (v_hat.array().sqrt() + config_.adam_eps);
    }
  }

  std::size_t size() const { return params_.size(); }

 private:
  std::vector<Matrix*> params_;
  TrainConfig config_;
  std::vector<Matrix> m_, v_;
  std::int64_t t_ = 0;
};

inline int steps_per_epoch(std::size_t examples, int batch_size) {
  return static_cast<int>((examples + static_cast<std::size_t>(batch_size) - 1) /
                          static_cast<std::size_t>(batch_size));
}

struct BatchLoss {
  LossParts parts;
  double total = 0.0;
  bool pal_skipped = false;
};

namespace detail {

struct PreparedExample {
  AggregatedFeatureSet features;
  Matrix grid_mask;
  int label = 0;
};

}  // namespace detail

// Loss of one batch and, when grads is non-null, its gradient. Classification
// and segmentation terms are averaged over images; the alignment term pools
// the patches of the batch's anomalous images.
inline BatchLoss batch_loss(const AnomalyModel& model,
                            const std::vector<const detail::PreparedExample*>& batch,
                            const LossConfig& loss, ModelGrads* grads) {
  const int g = model.grid_side();
  const auto n_images = static_cast<double>(batch.size());
  std::vector<ForwardTrace> traces(batch.size());
  std::vector<Vector> grad_logits(batch.size());
  BatchLoss out;

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& ex = *batch[b];
    const Vector logits = model.forward(ex.features, &traces[b]);
    grad_logits[b] = Vector::Zero(logits.size());

    const auto cls = focal_logit(logits(0), ex.label != 0 ? 1.0 : 0.0, loss.cls_focal());
    out.parts.cls += cls.value / n_images;
    grad_logits[b](0) = cls.grad / n_images;

    Matrix grid_logits = patch_grid(logits, g);
    const auto seg = segmentation_loss_from_logits(grid_logits, ex.grid_mask, loss);
    out.parts.seg += seg.value / n_images;
    for (int h = 0; h < g; ++h)
      for (int w = 0; w < g; ++w)
        grad_logits[b](1 + h * g + w) = loss.lambda1 * seg.grad(h, w) / n_images;
  }

  // Alignment loss over patches of anomalous images, per stream.
  std::vector<std::size_t> anomalous;
  for (std::size_t b = 0; b < batch.size(); ++b)
    if (batch[b]->label != 0) anomalous.push_back(b);
  std::vector<std::vector<Matrix>> extra(batch.size());
  const std::size_t n_streams = traces.empty() ? 0 : traces.front().joint.size();
  if (!anomalous.empty() && n_streams > 0) {
    const auto n = static_cast<Eigen::Index>(g) * g;
    const auto width = traces.front().joint.front().cols();
    std::vector<Matrix> pooled(n_streams, Matrix(n * static_cast<Eigen::Index>(anomalous.size()), width));
    std::vector<int> labels;
    for (std::size_t k = 0; k < anomalous.size(); ++k) {
      const auto& ex = *batch[anomalous[k]];
      for (Eigen::Index i = 0; i < n; ++i) labels.push_back(ex.grid_mask.data()[i] > 0.5 ? 1 : 0);
      for (std::size_t s = 0; s < n_streams; ++s)
        pooled[s].middleRows(static_cast<Eigen::Index>(k) * n, n) =
            traces[anomalous[k]].joint[s].bottomRows(n);
    }
    const auto pal = patch_alignment_loss(pooled, labels);
    out.parts.pal = pal.value;
    out.pal_skipped = pal.skipped;
    if (!pal.skipped && pal.value > 0.0) {
      for (std::size_t k = 0; k < anomalous.size(); ++k) {
        auto& e = extra[anomalous[k]];
        for (std::size_t s = 0; s < n_streams; ++s) {
          Matrix gz = Matrix::Zero(n + 1, width);
          gz.bottomRows(n) = loss.lambda2 * pal.grads[s].middleRows(static_cast<Eigen::Index>(k) * n, n);
          e.push_back(std::move(gz));
        }
      }
    }
  } else {
    out.pal_skipped = true;
  }

  out.total = total_loss(out.parts, loss);
  if (!std::isfinite(out.total)) throw NumericError("training loss is not finite");
  if (grads != nullptr)
    for (std::size_t b = 0; b < batch.size(); ++b)
      model.backward(traces[b], grad_logits[b], extra[b].empty() ? nullptr : &extra[b], *grads);
  return out;
}

// Optimizes the adapter and the prompt prefix on an auxiliary labeled set.
// The backbone is only read. Deterministic for a fixed seed: the data order
// is a seeded shuffle per epoch and all reductions are sequential.
inline TrainResult train(const Backbone& backbone, const std::vector<TrainingExample>& data,
                         const ModelConfig& model_config, const LossConfig& loss_config,
                         const TrainConfig& train_config, const std::string& dataset_id,
                         const std::function<void(const StepRecord&)>& on_step = {}) {
  model_config.validate();
  loss_config.validate();
  train_config.validate();
  require(train_config.image_size == backbone.spec().input_size,
          "train config: image_size " + std::to_string(train_config.image_size) +
              " does not match backbone input size " + std::to_string(backbone.spec().input_size));
  if (data.empty()) throw DataError("training set is empty");
  const bool any_anomalous = std::any_of(data.begin(), data.end(),
                                         [](const TrainingExample& e) { return e.label != 0; });
  if (!any_anomalous) throw DataError("training set has no anomalous image; refusing to train");

  AnomalyModel model = AnomalyModel::create(backbone, model_config, train_config.seed);
  const int g = model.grid_side();

  std::vector<detail::PreparedExample> prepared;
  prepared.reserve(data.size());
  for (const auto& ex : data) {
    detail::PreparedExample p{model.features(ex.image), resize_mask(ex.mask, g, g), ex.label};
    if (p.grid_mask.maxCoeff() > 0.0 && ex.label == 0)
      throw DataError("training example labelled normal carries a non-empty mask");
    prepared.push_back(std::move(p));
  }

  const bool train_adapter = model_config.switches.adapter;
  const bool train_prompts = model.prompts().trainable;
  std::vector<Matrix*> params;
  if (train_adapter) {
    auto& a = model.adapter();
    params.insert(params.end(), {&a.wq, &a.wk, &a.wv, &a.wo});
  }
  if (train_prompts) params.push_back(&model.prompts().prefix);
  Adam adam(params, train_config);

  const int per_epoch = steps_per_epoch(prepared.size(), train_config.batch_size);
  int total_steps = per_epoch * train_config.epochs;
  if (train_config.max_steps > 0) total_steps = std::min(total_steps, train_config.max_steps);

  TrainResult result;
  std::mt19937_64 rng(train_config.seed);
  std::vector<std::size_t> order(prepared.size());
  int step = 0;
  for (int epoch = 0; epoch < train_config.epochs && step < total_steps; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (int k = 0; k < per_epoch && step < total_steps; ++k) {
      std::vector<const detail::PreparedExample*> batch;
      const auto begin = static_cast<std::size_t>(k) * static_cast<std::size_t>(train_config.batch_size);
      const auto end = std::min(order.size(), begin + static_cast<std::size_t>(train_config.batch_size));
      for (auto i = begin; i < end; ++i) batch.push_back(&prepared[order[i]]);

      ModelGrads grads = model.zero_grads();
      const auto loss = batch_loss(model, batch, loss_config, &grads);
      if (loss.pal_skipped) ++result.pal_skipped;

      if (!params.empty()) {
        std::vector<Matrix> owned;
        if (train_adapter) owned.insert(owned.end(), {grads.adapter.wq, grads.adapter.wk,
                                                      grads.adapter.wv, grads.adapter.wo});
        if (train_prompts)
          owned.push_back(encode_states_backward(model.prompts(), backbone, grads.t_normal,
                                                 grads.t_abnormal));
        if (train_config.grad_clip > 0.0) {
          double sq = 0.0;
          for (const auto& m : owned) sq += m.squaredNorm();
          const double norm = std::sqrt(sq);
          if (norm > train_config.grad_clip)
            for (auto& m : owned) m *= train_config.grad_clip / norm;
        }
        std::vector<const Matrix*> views;
        for (const auto& m : owned) views.push_back(&m);
        double lr = train_config.learning_rate;
        if (train_config.cosine_schedule)
          lr *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / total_steps));
        adam.step(views, lr);
        if (train_prompts) model.refresh_anchors();
      }

      StepRecord record{step + 1, loss.parts, loss.total};
      result.log.push_back(record);
      if (on_step) on_step(record);
      ++step;
    }
  }
  result.checkpoint = make_checkpoint(model, loss_config, train_config, dataset_id, step);
  return result;
}

// Plain-text loss curve: one "step L_cls L_seg L_pal L" line per step.
inline void write_loss_log(std::ostream& out, const std::vector<StepRecord>& log) {
  out << "# step L_cls L_seg L_pal L\n";
  out.precision(17);
  for (const auto& r : log)
    out << r.step << ' ' << r.parts.cls << ' ' << r.parts.seg << ' ' << r.parts.pal << ' '
        << r.total << '\n';
}

// Full zero-shot pipeline for one raw image under a trained checkpoint.
inline AnomalyResult zero_shot_infer(const Image& image, const Checkpoint& checkpoint,
                                     const Backbone& backbone) {
  return model_from_checkpoint(checkpoint, backbone).infer(image);
}

}  // namespace afclip
