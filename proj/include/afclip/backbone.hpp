#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "afclip/imaging.hpp"
#include "afclip/types.hpp"

namespace afclip {

struct NormalizationConstants {
  std::array<double, 3> mean{0.48145466, 0.4578275, 0.40821073};
  std::array<double, 3> stddev{0.26862954, 0.26130258, 0.27577711};
};

struct BackboneSpec {
  std::string backbone_id;
  int patch_size = 14;
  int input_size = 518;
  int token_dim = 1024;
  int joint_dim = 768;
  int text_embed_dim = 768;
  int encoder_depth = 24;
  std::array<int, 4> block_boundaries{6, 12, 18, 24};
  int context_length = 77;
  NormalizationConstants normalization;

  int grid_side() const { return input_size / patch_size; }
  int num_patches() const { return grid_side() * grid_side(); }

  void validate() const {
    require(patch_size > 0 && input_size > 0 && token_dim > 0 && joint_dim > 0 &&
                text_embed_dim > 0 && encoder_depth > 0 && context_length > 0,
            "backbone spec: all dimensions must be positive");
    require(input_size % patch_size == 0, "backbone spec: input_size " + std::to_string(input_size) +
                                              " is not divisible by patch_size " +
                                              std::to_string(patch_size));
    for (std::size_t i = 0; i < block_boundaries.size(); ++i) {
      require(block_boundaries[i] > 0, "backbone spec: block boundaries must be positive");
      if (i > 0)
        require(block_boundaries[i] > block_boundaries[i - 1],
                "backbone spec: block boundaries must be strictly increasing");
    }
    require(block_boundaries.back() == encoder_depth,
            "backbone spec: last block boundary must equal encoder depth");
    for (double s : normalization.stddev)
      require(s > 0.0, "backbone spec: normalization std must be positive");
  }
};

// ViT-L/14 visual tower fed at 518 px: 37x37 patch grid, four 6-layer blocks.
inline BackboneSpec vit_l14_spec() {
  BackboneSpec spec;
  spec.backbone_id = "vitl14-336";
  return spec;
}

// One encoder block's tokens: cls (1 x d) and patches (N x d), row-major grid order.
struct BlockTokens {
  int block_id = 0;  // 1-based
  RowVector cls;
  Matrix patches;

  // [cls; patches] as one (N+1) x d matrix.
  Matrix stacked() const {
    Matrix out(patches.rows() + 1, patches.cols());
    out.row(0) = cls;
    out.bottomRows(patches.rows()) = patches;
    return out;
  }
};

using BlockSet = std::array<BlockTokens, 4>;

// Frozen vision-language encoder pair. Implementations are read-only after
// construction and may be shared across threads.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual const BackboneSpec& spec() const = 0;

  // Image must already be input_size square and normalized (see normalize_image).
  virtual BlockSet encode_image_blocks(const Image& image) const = 0;

  // Unit-norm text feature of width joint_dim for an embedded token sequence
  // that already carries its start/end sentinels.
  virtual Vector encode_text(const Matrix& sequence) const = 0;

  // Vector-Jacobian product of encode_text: gradient w.r.t. the sequence
  // given the gradient w.r.t. the unit-norm output.
  virtual Matrix encode_text_vjp(const Matrix& sequence, const Vector& grad_output) const = 0;

  // Row-wise frozen projection head into the joint space.
  virtual Matrix project_to_joint(const Matrix& tokens) const = 0;
  virtual Matrix project_to_joint_vjp(const Matrix& grad_output) const = 0;

  virtual std::vector<int> tokenize(std::string_view text) const = 0;
  virtual Matrix embed_tokens(const std::vector<int>& ids) const = 0;
  virtual int start_token() const = 0;
  virtual int end_token() const = 0;

  virtual std::uint64_t weight_checksum() const = 0;
};

// Normalizes a resized RGB image with the backbone's channel statistics.
inline Image normalize_image(const Image& image, const BackboneSpec& spec) {
  Image out = image;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = static_cast<float>((image.at(y, x, c) - spec.normalization.mean[c]) /
                                             spec.normalization.stddev[c]);
  return out;
}

inline Image prepare_image(const Image& image, const BackboneSpec& spec) {
  return normalize_image(resize_image(image, spec.input_size), spec);
}

struct StubConfig {
  int patch_size = 8;
  int grid_side = 8;
  int token_dim = 32;
  int joint_dim = 32;
  int text_embed_dim = 16;
  int text_hidden = 32;
  int encoder_depth = 8;
  std::array<int, 4> block_boundaries{2, 4, 6, 8};
  bool identity_projection = false;
  std::uint64_t seed = 20250101;
};

// Small deterministic stand-in for a pretrained encoder pair: a seeded linear
// patchifier followed by residual tanh layers, a word-embedding table over a
// tiny fixed vocabulary, and a pooled tanh text encoder.
class StubBackbone final : public Backbone {
 public:
  explicit StubBackbone(StubConfig config = {}) : config_(config) {
    spec_.backbone_id = "stub-32";
    spec_.patch_size = config.patch_size;
    spec_.input_size = config.patch_size * config.grid_side;
    spec_.token_dim = config.token_dim;
    spec_.joint_dim = config.joint_dim;
    spec_.text_embed_dim = config.text_embed_dim;
    spec_.encoder_depth = config.encoder_depth;
    spec_.block_boundaries = config.block_boundaries;
    spec_.validate();
    require(!config.identity_projection || config.token_dim == config.joint_dim,
            "stub backbone: identity projection needs token_dim == joint_dim");

    for (const char* word : kVocabulary) vocab_.emplace(word, static_cast<int>(vocab_.size()));

    std::mt19937_64 rng(config.seed);
    const int d = config.token_dim;
    const int patch_len = 3 * config.patch_size * config.patch_size;
    const int n = spec_.num_patches();
    patch_embed_ = gaussian(rng, patch_len, d, 1.0 / std::sqrt(static_cast<double>(patch_len)));
    position_ = gaussian(rng, n, d, 0.02);
    cls_embed_ = gaussian(rng, 1, d, 0.02);
    layers_.reserve(static_cast<std::size_t>(config.encoder_depth));
    for (int i = 0; i < config.encoder_depth; ++i)
      layers_.push_back(gaussian(rng, d, d, 0.7 / std::sqrt(static_cast<double>(d))));
    projection_ = config.identity_projection
                      ? Matrix(Matrix::Identity(d, d))
                      : gaussian(rng, d, config.joint_dim, 1.0 / std::sqrt(static_cast<double>(d)));

    const int e = config.text_embed_dim;
    token_table_ = gaussian(rng, static_cast<int>(vocab_.size()), e, 1.0);
    text_in_ = gaussian(rng, e, config.text_hidden, 1.0 / std::sqrt(static_cast<double>(e)));
    text_position_ = gaussian(rng, spec_.context_length, config.text_hidden, 0.1);
    text_out_ = gaussian(rng, config.text_hidden, config.joint_dim,
                         1.0 / std::sqrt(static_cast<double>(config.text_hidden)));

    Fingerprint fp;
    for (const Matrix* m : {&patch_embed_, &position_, &cls_embed_, &projection_, &token_table_,
                            &text_in_, &text_position_, &text_out_})
      fp.update(*m);
    for (const auto& m : layers_) fp.update(m);
    checksum_ = fp.value();
  }

  const BackboneSpec& spec() const override { return spec_; }
  const StubConfig& config() const { return config_; }

  BlockSet encode_image_blocks(const Image& image) const override {
    require(image.height == spec_.input_size && image.width == spec_.input_size,
            "encode_image_blocks: image is " + std::to_string(image.height) + "x" +
                std::to_string(image.width) + ", backbone expects " +
                std::to_string(spec_.input_size) + "x" + std::to_string(spec_.input_size));
    const int p = config_.patch_size;
    const int g = config_.grid_side;
    Matrix patches_px(g * g, 3 * p * p);
    for (int gy = 0; gy < g; ++gy)
      for (int gx = 0; gx < g; ++gx) {
        const int row = gy * g + gx;
        int col = 0;
        for (int y = 0; y < p; ++y)
          for (int x = 0; x < p; ++x)
            for (int c = 0; c < 3; ++c) patches_px(row, col++) = image.at(gy * p + y, gx * p + x, c);
      }
    Matrix patches = patches_px * patch_embed_ + position_;
    RowVector cls = cls_embed_.row(0) + patches.colwise().mean();

    BlockSet blocks;
    std::size_t next = 0;
    for (int layer = 0; layer < config_.encoder_depth; ++layer) {
      const Matrix& w = layers_[static_cast<std::size_t>(layer)];
      const RowVector pooled = patches.colwise().mean();
      patches += (patches * w).array().tanh().matrix();
      cls += ((cls + pooled) * w).array().tanh().matrix();
      if (layer + 1 == spec_.block_boundaries[next]) {
        blocks[next] = BlockTokens{static_cast<int>(next) + 1, cls, patches};
        ++next;
      }
    }
    for (const auto& b : blocks) {
      check_finite(b.patches, "encode_image_blocks patches");
      check_finite(b.cls, "encode_image_blocks cls");
    }
    return blocks;
  }

  Vector encode_text(const Matrix& sequence) const override {
    const auto fwd = text_forward(sequence);
    return fwd.raw / fwd.raw.norm();
  }

  Matrix encode_text_vjp(const Matrix& sequence, const Vector& grad_output) const override {
    const auto fwd = text_forward(sequence);
    const double norm = fwd.raw.norm();
    const Vector unit = fwd.raw / norm;
    const Vector grad_raw = (grad_output - grad_output.dot(unit) * unit) / norm;
    const RowVector grad_pooled = (text_out_ * grad_raw).transpose();
    const auto len = static_cast<double>(sequence.rows());
    Matrix grad_pre = (grad_pooled / len).replicate(sequence.rows(), 1);
    grad_pre.array() *= (1.0 - fwd.hidden.array().square());
    return grad_pre * text_in_.transpose();
  }

  Matrix project_to_joint(const Matrix& tokens) const override {
    require(tokens.cols() == spec_.token_dim, "project_to_joint: token width " +
                                                  std::to_string(tokens.cols()) + " != " +
                                                  std::to_string(spec_.token_dim));
    return tokens * projection_;
  }

  Matrix project_to_joint_vjp(const Matrix& grad_output) const override {
    require(grad_output.cols() == spec_.joint_dim, "project_to_joint_vjp: width mismatch");
    return grad_output * projection_.transpose();
  }

  std::vector<int> tokenize(std::string_view text) const override {
    std::vector<int> ids;
    std::string word;
    const auto flush = [&] {
      if (word.empty()) return;
      const auto it = vocab_.find(word);
      require(it != vocab_.end(), "stub tokenizer: unknown word '" + word + "'");
      ids.push_back(it->second);
      word.clear();
    };
    for (char ch : text) {
      if (ch == ' ' || ch == '\t' || ch == '\n') {
        flush();
      } else if (ch == '.' || ch == ',') {
        flush();
        word.push_back(ch);
        flush();
      } else {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
      }
    }
    flush();
    return ids;
  }

  Matrix embed_tokens(const std::vector<int>& ids) const override {
    Matrix out(static_cast<Eigen::Index>(ids.size()), spec_.text_embed_dim);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      require(ids[i] >= 0 && ids[i] < token_table_.rows(), "embed_tokens: token id out of range");
      out.row(static_cast<Eigen::Index>(i)) = token_table_.row(ids[i]);
    }
    return out;
  }

  int start_token() const override { return 0; }
  int end_token() const override { return 1; }

  std::uint64_t weight_checksum() const override { return checksum_; }

 private:
  static constexpr const char* kVocabulary[] = {
      "<start>", "<end>", "<pad>", "a",       "an",  "the",    "photo",  "of",     "object",
      "damaged", "with",  "without", "defect", "anomaly", "flawless", "perfect", "normal", ".",
      ","};

  struct TextForward {
    Matrix hidden;
    Vector raw;
  };

  TextForward text_forward(const Matrix& sequence) const {
    require(sequence.rows() >= 1 && sequence.rows() <= spec_.context_length,
            "encode_text: sequence length " + std::to_string(sequence.rows()) +
                " outside [1, " + std::to_string(spec_.context_length) + "]");
    require(sequence.cols() == spec_.text_embed_dim, "encode_text: embedding width mismatch");
    TextForward f;
    f.hidden = (sequence * text_in_ + text_position_.topRows(sequence.rows())).array().tanh();
    const RowVector pooled = f.hidden.colwise().mean();
    f.raw = (pooled * text_out_).transpose();
    if (!f.raw.allFinite() || f.raw.norm() == 0.0)
      throw NumericError("encode_text: degenerate text feature");
    return f;
  }

  static Matrix gaussian(std::mt19937_64& rng, int rows, int cols, double scale) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * dist(rng);
    return m;
  }

  StubConfig config_;
  BackboneSpec spec_;
  std::unordered_map<std::string, int> vocab_;
  Matrix patch_embed_, position_, cls_embed_, projection_;
  std::vector<Matrix> layers_;
  Matrix token_table_, text_in_, text_position_, text_out_;
  std::uint64_t checksum_ = 0;
};

// Resolves a backbone identifier. Only the stub ships with this library;
// pretrained towers plug in by implementing Backbone.
inline std::unique_ptr<Backbone> make_backbone(const std::string& id,
                                               const std::string& weights_dir = {}) {
  if (id == "stub-32") return std::make_unique<StubBackbone>();
  if (id == "vitl14-336")
    throw ConfigError("backbone '" + id + "' needs a pretrained weight loader (weights dir: '" +
                      weights_dir + "'); none is compiled into this build");
  throw ConfigError("unknown backbone id '" + id + "'");
}

}  // namespace afclip
