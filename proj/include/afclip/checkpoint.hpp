#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "afclip/losses.hpp"
#include "afclip/model.hpp"

namespace afclip {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 8;
  int epochs = 2;
  int image_size = 518;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  int max_steps = 0;          // 0 = run all epochs
  double grad_clip = 0.0;     // global-norm clip, 0 = off
  bool cosine_schedule = false;

  void validate() const {
    require(learning_rate > 0.0 && batch_size > 0 && epochs > 0 && image_size > 0,
            "train config: learning rate, batch size, epochs and image size must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0,
            "train config: invalid Adam coefficients");
    require(weight_decay >= 0.0 && max_steps >= 0 && grad_clip >= 0.0,
            "train config: weight decay, max steps and clip must be non-negative");
  }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'A', 'F', 'C', 'L', 'I', 'P', 'C', 'K'};

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  AdapterParams adapter;
  PromptBank prompts;
  std::string backbone_id;
  std::uint64_t backbone_checksum = 0;
  std::string dataset_id;
  std::int64_t steps = 0;
};

inline Checkpoint make_checkpoint(const AnomalyModel& model, const LossConfig& loss,
                                  const TrainConfig& train, std::string dataset_id,
                                  std::int64_t steps) {
  return {kCheckpointVersion,
          model.config(),
          loss,
          train,
          model.adapter(),
          model.prompts(),
          model.backbone().spec().backbone_id,
          model.backbone().weight_checksum(),
          std::move(dataset_id),
          steps};
}

inline void verify_backbone(const Checkpoint& ckpt, const Backbone& backbone) {
  if (ckpt.backbone_id != backbone.spec().backbone_id ||
      ckpt.backbone_checksum != backbone.weight_checksum())
    throw ChecksumError("checkpoint was trained on backbone '" + ckpt.backbone_id + "' (" +
                        to_hex(ckpt.backbone_checksum) + "), loaded backbone is '" +
                        backbone.spec().backbone_id + "' (" + to_hex(backbone.weight_checksum()) +
                        ")");
}

inline AnomalyModel model_from_checkpoint(const Checkpoint& ckpt, const Backbone& backbone) {
  verify_backbone(ckpt, backbone);
  return AnomalyModel(backbone, ckpt.model, ckpt.adapter, ckpt.prompts);
}

// ---- JSON views of the configs -------------------------------------------

inline nlohmann::json optional_to_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
inline std::optional<double> optional_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline nlohmann::json to_json(const ComponentSwitches& s) {
  return {{"learnable_prompts", s.learnable_prompts},
          {"adapter", s.adapter},
          {"multilevel", s.multilevel},
          {"aggregation", s.aggregation}};
}
inline ComponentSwitches switches_from_json(const nlohmann::json& j) {
  return {j.at("learnable_prompts").get<bool>(), j.at("adapter").get<bool>(),
          j.at("multilevel").get<bool>(), j.at("aggregation").get<bool>()};
}

inline nlohmann::json to_json(const ScoreConfig& s) {
  return {{"tau", s.tau}, {"smooth_sigma", s.smooth_sigma}, {"output_size", s.output_size}};
}
inline ScoreConfig score_from_json(const nlohmann::json& j) {
  return {j.at("tau").get<double>(), j.at("smooth_sigma").get<double>(),
          j.at("output_size").get<int>()};
}

inline nlohmann::json to_json(const ModelConfig& m) {
  return {{"windows", m.windows},
          {"window_sigma", m.window_sigma},
          {"adapter_inner", m.adapter_inner},
          {"adapter_heads", m.adapter_heads},
          {"prompt_length", m.prompt_length},
          {"switches", to_json(m.switches)},
          {"score", to_json(m.score)}};
}
inline ModelConfig model_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.windows = j.at("windows").get<std::vector<int>>();
  m.window_sigma = j.at("window_sigma").get<double>();
  m.adapter_inner = j.at("adapter_inner").get<int>();
  m.adapter_heads = j.at("adapter_heads").get<int>();
  m.prompt_length = j.at("prompt_length").get<int>();
  m.switches = switches_from_json(j.at("switches"));
  m.score = score_from_json(j.at("score"));
  return m;
}

inline nlohmann::json to_json(const LossConfig& l) {
  return {{"lambda1", l.lambda1},
          {"lambda2", l.lambda2},
          {"focal_gamma", l.focal_gamma},
          {"cls_alpha", optional_to_json(l.cls_alpha)},
          {"seg_alpha", optional_to_json(l.seg_alpha)}};
}
inline LossConfig loss_from_json(const nlohmann::json& j) {
  LossConfig l;
  l.lambda1 = j.at("lambda1").get<double>();
  l.lambda2 = j.at("lambda2").get<double>();
  l.focal_gamma = j.at("focal_gamma").get<double>();
  l.cls_alpha = optional_from_json(j.at("cls_alpha"));
  l.seg_alpha = optional_from_json(j.at("seg_alpha"));
  return l;
}

inline nlohmann::json to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size},
          {"epochs", t.epochs},               {"image_size", t.image_size},
          {"seed", t.seed},                   {"beta1", t.beta1},
          {"beta2", t.beta2},                 {"adam_eps", t.adam_eps},
          {"weight_decay", t.weight_decay},   {"max_steps", t.max_steps},
          {"grad_clip", t.grad_clip},         {"cosine_schedule", t.cosine_schedule}};
}
inline TrainConfig train_from_json(const nlohmann::json& j) {
  TrainConfig t;
  t.learning_rate = j.at("learning_rate").get<double>();
  t.batch_size = j.at("batch_size").get<int>();
  t.epochs = j.at("epochs").get<int>();
  t.image_size = j.at("image_size").get<int>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.beta1 = j.at("beta1").get<double>();
  t.beta2 = j.at("beta2").get<double>();
  t.adam_eps = j.at("adam_eps").get<double>();
  t.weight_decay = j.at("weight_decay").get<double>();
  t.max_steps = j.at("max_steps").get<int>();
  t.grad_clip = j.at("grad_clip").get<double>();
  t.cosine_schedule = j.at("cosine_schedule").get<bool>();
  return t;
}

// ---- binary tensor blobs ---------------------------------------------------

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError(std::string("truncated file while reading ") + what);
  return v;
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
  write_pod<std::int64_t>(out, m.rows());
  write_pod<std::int64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

inline Matrix read_matrix(std::istream& in, const char* what) {
  const auto rows = read_pod<std::int64_t>(in, what);
  const auto cols = read_pod<std::int64_t>(in, what);
  if (rows < 0 || cols < 0 || rows * cols > (std::int64_t{1} << 32))
    throw DataError(std::string("implausible tensor shape for ") + what);
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  if (!in) throw DataError(std::string("truncated tensor data for ") + what);
  return m;
}

inline void write_header(std::ostream& out, const char (&magic)[8], std::uint32_t version,
                         const nlohmann::json& meta) {
  out.write(magic, 8);
  write_pod(out, version);
  const std::string text = meta.dump();
  write_pod<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline nlohmann::json read_header(std::istream& in, const char (&magic)[8],
                                  std::uint32_t expected_version, const char* what) {
  char got[8];
  in.read(got, 8);
  if (!in || std::memcmp(got, magic, 8) != 0)
    throw DataError(std::string("not a ") + what + " file (bad magic)");
  const auto version = read_pod<std::uint32_t>(in, what);
  if (version != expected_version)
    throw DataError(std::string(what) + " format version " + std::to_string(version) +
                    " is not supported (expected " + std::to_string(expected_version) + ")");
  const auto size = read_pod<std::uint64_t>(in, what);
  if (size > (std::uint64_t{1} << 30)) throw DataError(std::string("oversized header in ") + what);
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  if (!in) throw DataError(std::string("truncated header in ") + what);
  return nlohmann::json::parse(text);
}

}  // namespace detail

// Layout: magic "AFCLIPCK", u32 version, u64 header length, JSON header,
// then the tensors (i64 rows, i64 cols, row-major f64) in the order
// wq, wk, wv, wo, prefix.
inline void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  nlohmann::json meta = {
      {"model", to_json(ckpt.model)},
      {"loss", to_json(ckpt.loss)},
      {"train", to_json(ckpt.train)},
      {"adapter_heads", ckpt.adapter.heads},
      {"prompts",
       {{"normal_suffix", ckpt.prompts.normal_suffix},
        {"abnormal_suffix", ckpt.prompts.abnormal_suffix},
        {"normal_suffix_ids", ckpt.prompts.normal_suffix_ids},
        {"abnormal_suffix_ids", ckpt.prompts.abnormal_suffix_ids},
        {"trainable", ckpt.prompts.trainable}}},
      {"backbone_id", ckpt.backbone_id},
      {"backbone_checksum", to_hex(ckpt.backbone_checksum)},
      {"dataset_id", ckpt.dataset_id},
      {"steps", ckpt.steps},
      {"tensors", {"wq", "wk", "wv", "wo", "prefix"}}};
  detail::write_header(out, kCheckpointMagic, ckpt.format_version, meta);
  for (const Matrix* m : {&ckpt.adapter.wq, &ckpt.adapter.wk, &ckpt.adapter.wv, &ckpt.adapter.wo,
                          &ckpt.prompts.prefix})
    detail::write_matrix(out, *m);
  if (!out) throw DataError("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  const auto meta = detail::read_header(in, kCheckpointMagic, kCheckpointVersion, "checkpoint");
  Checkpoint c;
  try {
    c.model = model_from_json(meta.at("model"));
    c.loss = loss_from_json(meta.at("loss"));
    c.train = train_from_json(meta.at("train"));
    c.adapter.heads = meta.at("adapter_heads").get<int>();
    const auto& p = meta.at("prompts");
    c.prompts.normal_suffix = p.at("normal_suffix").get<std::string>();
    c.prompts.abnormal_suffix = p.at("abnormal_suffix").get<std::string>();
    c.prompts.normal_suffix_ids = p.at("normal_suffix_ids").get<std::vector<int>>();
    c.prompts.abnormal_suffix_ids = p.at("abnormal_suffix_ids").get<std::vector<int>>();
    c.prompts.trainable = p.at("trainable").get<bool>();
    c.backbone_id = meta.at("backbone_id").get<std::string>();
    c.backbone_checksum = std::stoull(meta.at("backbone_checksum").get<std::string>(), nullptr, 16);
    c.dataset_id = meta.at("dataset_id").get<std::string>();
    c.steps = meta.at("steps").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  }
  c.adapter.wq = detail::read_matrix(in, "wq");
  c.adapter.wk = detail::read_matrix(in, "wk");
  c.adapter.wv = detail::read_matrix(in, "wv");
  c.adapter.wo = detail::read_matrix(in, "wo");
  c.prompts.prefix = detail::read_matrix(in, "prefix");
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
  write_checkpoint(out, ckpt);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  return read_checkpoint(in);
}

inline std::string checkpoint_bytes(const Checkpoint& ckpt) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, ckpt);
  return out.str();
}

}  // namespace afclip
