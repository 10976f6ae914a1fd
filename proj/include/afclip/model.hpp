#pragma once

#include <optional>
#include <vector>

#include "afclip/adapter.hpp"
#include "afclip/aggregation.hpp"
#include "afclip/backbone.hpp"
#include "afclip/prompts.hpp"
#include "afclip/scoring.hpp"

namespace afclip {

// On/off switches for the ablation variants. All off with fixed prompts is
// the plain last-block baseline.
struct ComponentSwitches {
  bool learnable_prompts = true;
  bool adapter = true;
  bool multilevel = true;
  bool aggregation = true;

  static ComponentSwitches base() { return {false, false, false, false}; }
  friend bool operator==(const ComponentSwitches&, const ComponentSwitches&) = default;
};

struct ModelConfig {
  std::vector<int> windows{1, 3, 5};
  double window_sigma = 1.0;
  int adapter_inner = 0;  // 0 selects token_dim / 2
  int adapter_heads = 1;
  int prompt_length = 12;
  ComponentSwitches switches;
  ScoreConfig score;  // output_size 0 means "backbone input size"

  std::vector<int> active_blocks() const {
    return switches.multilevel ? std::vector<int>{1, 2, 3, 4} : std::vector<int>{4};
  }
  std::vector<int> active_windows() const {
    return switches.aggregation ? windows : std::vector<int>{1};
  }
  int inner_dim(const BackboneSpec& spec) const {
    return adapter_inner > 0 ? adapter_inner : std::max(1, spec.token_dim / 2);
  }
  ScoreConfig resolved_score(const BackboneSpec& spec) const {
    ScoreConfig s = score;
    if (s.output_size == 0) s.output_size = spec.input_size;
    return s;
  }

  void validate() const {
    require(!windows.empty(), "model config: window set is empty");
    for (int r : windows) WindowSpec{r, window_sigma}.validate();
    require(adapter_inner >= 0, "model config: adapter inner width must be >= 0");
    require(adapter_heads >= 1, "model config: adapter heads must be >= 1");
    require(prompt_length >= 1, "model config: prompt length must be >= 1");
    require(score.tau > 0.0 && score.smooth_sigma >= 0.0 && score.output_size >= 0,
            "model config: invalid score settings");
  }
};

// Everything the backward pass needs from one image's forward pass.
struct ForwardTrace {
  std::vector<AdapterTrace> adapter;  // per stream, empty when the adapter is off
  std::vector<Matrix> joint;          // z per stream, (N+1) x t
  Vector logits;                      // S_a - S_n summed over streams, per token
};

struct ModelGrads {
  AdapterGrads adapter;
  Vector t_normal;
  Vector t_abnormal;
};

// The trainable state and the inference/training passes around a frozen backbone.
class AnomalyModel {
 public:
  AnomalyModel(const Backbone& backbone, ModelConfig config, AdapterParams adapter,
               PromptBank prompts)
      : backbone_(&backbone),
        config_(std::move(config)),
        adapter_(std::move(adapter)),
        prompts_(std::move(prompts)) {
    config_.validate();
    if (config_.switches.adapter) {
      adapter_.validate();
      require(adapter_.token_dim() == backbone.spec().token_dim,
              "model: adapter width does not match backbone token width");
    }
    refresh_anchors();
  }

  static AnomalyModel create(const Backbone& backbone, const ModelConfig& config,
                             std::uint64_t seed) {
    const auto& spec = backbone.spec();
    AdapterParams adapter =
        init_adapter(spec.token_dim, config.inner_dim(spec), seed, config.adapter_heads);
    PromptBank prompts = config.switches.learnable_prompts
                             ? make_prompt_bank(backbone, config.prompt_length, seed + 1)
                             : make_fixed_prompt_bank(backbone);
    return AnomalyModel(backbone, config, std::move(adapter), std::move(prompts));
  }

  const Backbone& backbone() const { return *backbone_; }
  const ModelConfig& config() const { return config_; }
  const AdapterParams& adapter() const { return adapter_; }
  AdapterParams& adapter() { return adapter_; }
  const PromptBank& prompts() const { return prompts_; }
  PromptBank& prompts() { return prompts_; }
  const StateAnchors& anchors() const { return anchors_; }

  // Re-encodes t_n, t_a; call after changing the prompt prefix.
  void refresh_anchors() { anchors_ = encode_states(prompts_, *backbone_); }

  int grid_side() const { return backbone_->spec().grid_side(); }

  // Frozen part of the pipeline: resize, normalize, encode, aggregate.
  AggregatedFeatureSet features(const Image& image) const {
    const auto blocks = backbone_->encode_image_blocks(prepare_image(image, backbone_->spec()));
    return build_multiscale_set(blocks, config_.active_blocks(), config_.active_windows(),
                                config_.window_sigma);
  }

  // Adapted and projected features for every stream.
  Matrix joint_features(const Matrix& stream, AdapterTrace* trace) const {
    const Matrix adapted = config_.switches.adapter ? adapt(stream, adapter_, trace) : stream;
    return backbone_->project_to_joint(adapted);
  }

  Vector forward(const AggregatedFeatureSet& set, ForwardTrace* trace) const {
    const double tau = config_.score.tau;
    Vector logits;
    if (trace != nullptr) {
      trace->adapter.assign(config_.switches.adapter ? set.size() : 0, AdapterTrace{});
      trace->joint.clear();
    }
    for (std::size_t s = 0; s < set.size(); ++s) {
      AdapterTrace* at =
          (trace != nullptr && config_.switches.adapter) ? &trace->adapter[s] : nullptr;
      Matrix z = joint_features(set.features[s], at);
      const auto scores = token_similarities(z, anchors_.normal, anchors_.abnormal, tau);
      if (logits.size() == 0) logits = Vector::Zero(z.rows());
      logits += scores.abnormal - scores.normal;
      if (trace != nullptr) trace->joint.push_back(std::move(z));
    }
    if (!logits.allFinite()) throw NumericError("model forward: non-finite scores");
    if (trace != nullptr) trace->logits = logits;
    return logits;
  }

  // grad_logits: dL/dlogit per token. extra_joint (optional): additional
  // dL/dz per stream, e.g. from the patch alignment loss.
  void backward(const ForwardTrace& trace, const Vector& grad_logits,
                const std::vector<Matrix>* extra_joint, ModelGrads& grads) const {
    const double inv_tau = 1.0 / config_.score.tau;
    for (std::size_t s = 0; s < trace.joint.size(); ++s) {
      const Matrix& z = trace.joint[s];
      const Vector g = grad_logits * inv_tau;
      Matrix grad_z = (row_cosine_grad(z, anchors_.abnormal) - row_cosine_grad(z, anchors_.normal));
      grad_z.array().colwise() *= g.array();
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double norm = z.row(i).norm();
        if (norm == 0.0) continue;
        const Vector zhat = z.row(i).transpose() / norm;
        grads.t_abnormal += g(i) * zhat;
        grads.t_normal -= g(i) * zhat;
      }
      if (extra_joint != nullptr) grad_z += (*extra_joint)[s];
      if (!config_.switches.adapter) continue;
      const Matrix grad_adapted = backbone_->project_to_joint_vjp(grad_z);
      adapt_backward(trace.adapter[s], adapter_, grad_adapted, grads.adapter);
    }
  }

  ModelGrads zero_grads() const {
    return {AdapterGrads::zeros_like(adapter_),
            Vector::Zero(backbone_->spec().joint_dim), Vector::Zero(backbone_->spec().joint_dim)};
  }

  // Patch-grid probabilities and rendered map from precomputed features.
  AnomalyResult score(const AggregatedFeatureSet& set) const {
    const Vector logits = forward(set, nullptr);
    const Vector probs = logits.unaryExpr([](double x) { return stable_sigmoid(x); });
    AnomalyResult result;
    result.image_score = probs(0);
    result.patch_probs = patch_grid(probs, grid_side());
    result.pixel_map = render_score_map(result.patch_probs, config_.resolved_score(backbone_->spec()));
    return result;
  }

  AnomalyResult infer(const Image& image) const { return score(features(image)); }

 private:
  const Backbone* backbone_;
  ModelConfig config_;
  AdapterParams adapter_;
  PromptBank prompts_;
  StateAnchors anchors_;
};

}  // namespace afclip
