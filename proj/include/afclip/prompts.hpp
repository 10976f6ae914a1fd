#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "afclip/backbone.hpp"
#include "afclip/types.hpp"

namespace afclip {

inline constexpr const char* kNormalSuffix = "without defect.";
inline constexpr const char* kAbnormalSuffix = "with defect.";
inline constexpr const char* kPrefixInitText = "a photo of a damaged object with anomaly";
inline constexpr const char* kFixedPrefixText = "a photo of an object";

// A shared prefix of M word embeddings followed by a fixed state suffix.
struct PromptBank {
  Matrix prefix;  // M x e, shared by both states
  std::string normal_suffix = kNormalSuffix;
  std::string abnormal_suffix = kAbnormalSuffix;
  std::vector<int> normal_suffix_ids;
  std::vector<int> abnormal_suffix_ids;
  bool trainable = true;

  int length() const { return static_cast<int>(prefix.rows()); }
};

struct StatePrompts {
  Matrix normal;
  Matrix abnormal;
};

struct StateAnchors {
  Vector normal;    // t_n
  Vector abnormal;  // t_a
};

namespace detail {

inline void attach_suffixes(PromptBank& bank, const Backbone& backbone) {
  bank.normal_suffix_ids = backbone.tokenize(bank.normal_suffix);
  bank.abnormal_suffix_ids = backbone.tokenize(bank.abnormal_suffix);
}

}  // namespace detail

// Learnable bank warm-started from the embedded init phrase, truncated or
// zero-padded to `length` rows, plus N(0, noise^2) jitter.
inline PromptBank make_prompt_bank(const Backbone& backbone, int length, std::uint64_t seed,
                                   double noise = 0.02) {
  require(length >= 1, "prompt bank: prefix length must be >= 1");
  const Matrix words = backbone.embed_tokens(backbone.tokenize(kPrefixInitText));
  PromptBank bank;
  bank.prefix = Matrix::Zero(length, backbone.spec().text_embed_dim);
  const auto copied = std::min<Eigen::Index>(length, words.rows());
  bank.prefix.topRows(copied) = words.topRows(copied);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, noise);
  for (Eigen::Index i = 0; i < bank.prefix.size(); ++i) bank.prefix.data()[i] += dist(rng);
  detail::attach_suffixes(bank, backbone);
  return bank;
}

// Hand-written "a photo of an object without/with defect." prompts, never trained.
inline PromptBank make_fixed_prompt_bank(const Backbone& backbone) {
  PromptBank bank;
  bank.prefix = backbone.embed_tokens(backbone.tokenize(kFixedPrefixText));
  bank.trainable = false;
  detail::attach_suffixes(bank, backbone);
  return bank;
}

// [start] + prefix + suffix + [end] for both states; the sequences differ
// only in the suffix region.
inline StatePrompts compose_state_prompts(const PromptBank& bank, const Backbone& backbone) {
  require(bank.length() >= 1, "compose_state_prompts: prefix length must be >= 1");
  require(bank.prefix.cols() == backbone.spec().text_embed_dim,
          "compose_state_prompts: prefix width mismatch");
  const auto build = [&](const std::vector<int>& suffix) {
    const auto total = 2 + bank.prefix.rows() + static_cast<Eigen::Index>(suffix.size());
    require(total <= backbone.spec().context_length,
            "compose_state_prompts: prompt of " + std::to_string(total) +
                " tokens exceeds context length " + std::to_string(backbone.spec().context_length));
    Matrix seq(total, bank.prefix.cols());
    seq.row(0) = backbone.embed_tokens({backbone.start_token()}).row(0);
    seq.middleRows(1, bank.prefix.rows()) = bank.prefix;
    seq.middleRows(1 + bank.prefix.rows(), static_cast<Eigen::Index>(suffix.size())) =
        backbone.embed_tokens(suffix);
    seq.row(total - 1) = backbone.embed_tokens({backbone.end_token()}).row(0);
    return seq;
  };
  return {build(bank.normal_suffix_ids), build(bank.abnormal_suffix_ids)};
}

inline StateAnchors encode_states(const PromptBank& bank, const Backbone& backbone) {
  const auto prompts = compose_state_prompts(bank, backbone);
  return {backbone.encode_text(prompts.normal), backbone.encode_text(prompts.abnormal)};
}

// Gradient w.r.t. the shared prefix given gradients w.r.t. t_n and t_a.
inline Matrix encode_states_backward(const PromptBank& bank, const Backbone& backbone,
                                     const Vector& grad_normal, const Vector& grad_abnormal) {
  const auto prompts = compose_state_prompts(bank, backbone);
  const Matrix gn = backbone.encode_text_vjp(prompts.normal, grad_normal);
  const Matrix ga = backbone.encode_text_vjp(prompts.abnormal, grad_abnormal);
  return gn.middleRows(1, bank.prefix.rows()) + ga.middleRows(1, bank.prefix.rows());
}

}  // namespace afclip
