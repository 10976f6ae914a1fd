#pragma once

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "afclip/checkpoint.hpp"
#include "afclip/memory_bank.hpp"
#include "afclip/types.hpp"

namespace afclip {

// Everything a command needs, resolved before it runs.
struct RunConfig {
  std::string backbone_id = "vitl14-336";
  std::string weights_dir;  // empty: AFCLIP_WEIGHTS_DIR

  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  FusionConfig fusion;

  std::string train_root;
  std::string train_layout = "mvtec";
  std::string test_root;
  std::string test_layout = "mvtec";

  std::string checkpoint;
  double fpr_limit = 0.3;
  int shots = 4;
  std::vector<std::uint64_t> shot_seeds{0, 1, 2};
  std::string category;  // restricts eval and bank building when set

  std::string image;
  std::string banks;

  std::string output_dir = "runs";
};

namespace detail {

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream out;
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << values[i];
  return out.str();
}

template <typename T>
std::vector<T> split_list(const std::string& text, const std::string& key) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.find_first_not_of(' ') == std::string::npos) continue;
    std::istringstream cs(cell);
    T v{};
    cs >> v;
    if (cs.fail()) throw ConfigError("config " + key + ": cannot parse list element '" + cell + "'");
    out.push_back(v);
  }
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

inline double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config " + key + ": expected a number, got '" + s + "'");
  }
}

inline long long parse_int(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config " + key + ": expected an integer, got '" + s + "'");
  }
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw ConfigError("config " + key + ": expected true/false, got '" + s + "'");
}

}  // namespace detail

// One config key. name is "section.key"; hashed fields define the run.
struct ConfigField {
  std::string name;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
  bool hashed = true;
};

inline const std::vector<ConfigField>& config_fields() {
  using detail::format_double;
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    const auto text = [&f](std::string name, std::string help, std::string RunConfig::*m,
                           bool hashed = true) {
      f.push_back({std::move(name), std::move(help), [m](const RunConfig& c) { return c.*m; },
                   [m](RunConfig& c, const std::string& v) { c.*m = v; }, hashed});
    };
    const auto real = [&f](std::string name, std::string help, auto access) {
      f.push_back({name, std::move(help),
                   [access](const RunConfig& c) { return format_double(access(c)); },
                   [access, name](RunConfig& c, const std::string& v) { access(c) = parse_double(v, name); }});
    };
    const auto integer = [&f](std::string name, std::string help, auto access) {
      f.push_back({name, std::move(help),
                   [access](const RunConfig& c) { return std::to_string(access(c)); },
                   [access, name](RunConfig& c, const std::string& v) {
                     using T = std::remove_reference_t<decltype(access(c))>;
                     access(c) = static_cast<T>(parse_int(v, name));
                   }});
    };
    const auto flag = [&f](std::string name, std::string help, auto access) {
      f.push_back({name, std::move(help),
                   [access](const RunConfig& c) {
                     return std::string(access(c) ? "true" : "false");
                   },
                   [access, name](RunConfig& c, const std::string& v) { access(c) = parse_bool(v, name); }});
    };

    text("backbone.id", "backbone identifier (vitl14-336, stub-32)", &RunConfig::backbone_id);
    text("backbone.weights_dir", "directory with backbone weights", &RunConfig::weights_dir, false);

    f.push_back({"model.windows", "aggregation window sizes, comma separated",
                 [](const RunConfig& c) { return detail::join(c.model.windows); },
                 [](RunConfig& c, const std::string& v) {
                   c.model.windows = detail::split_list<int>(v, "model.windows");
                 }});
    real("model.window_sigma", "Gaussian window sigma", [](auto& c) -> auto& { return c.model.window_sigma; });
    integer("model.adapter_inner", "adapter inner width, 0 = half the token width",
            [](auto& c) -> auto& { return c.model.adapter_inner; });
    integer("model.adapter_heads", "adapter attention heads", [](auto& c) -> auto& { return c.model.adapter_heads; });
    integer("model.prompt_length", "learnable prompt prefix length",
            [](auto& c) -> auto& { return c.model.prompt_length; });
    flag("model.learnable_prompts", "train the prompt prefix",
         [](auto& c) -> auto& { return c.model.switches.learnable_prompts; });
    flag("model.adapter", "use the attention adapter", [](auto& c) -> auto& { return c.model.switches.adapter; });
    flag("model.multilevel", "use all four blocks", [](auto& c) -> auto& { return c.model.switches.multilevel; });
    flag("model.aggregation", "use neighbourhood aggregation",
         [](auto& c) -> auto& { return c.model.switches.aggregation; });

    real("score.tau", "similarity temperature", [](auto& c) -> auto& { return c.model.score.tau; });
    real("score.smooth_sigma", "pixel map smoothing sigma", [](auto& c) -> auto& { return c.model.score.smooth_sigma; });
    integer("score.output_size", "pixel map side, 0 = backbone input size",
            [](auto& c) -> auto& { return c.model.score.output_size; });

    real("loss.lambda1", "segmentation loss weight", [](auto& c) -> auto& { return c.loss.lambda1; });
    real("loss.lambda2", "patch alignment loss weight", [](auto& c) -> auto& { return c.loss.lambda2; });
    real("loss.focal_gamma", "focal exponent", [](auto& c) -> auto& { return c.loss.focal_gamma; });
    f.push_back({"loss.cls_alpha", "classification focal alpha, empty = symmetric",
                 [](const RunConfig& c) {
                   return c.loss.cls_alpha ? format_double(*c.loss.cls_alpha) : std::string();
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v.empty() || v == "none")
                     c.loss.cls_alpha.reset();
                   else
                     c.loss.cls_alpha = parse_double(v, "loss.cls_alpha");
                 }});
    f.push_back({"loss.seg_alpha", "segmentation focal alpha, empty = symmetric",
                 [](const RunConfig& c) {
                   return c.loss.seg_alpha ? format_double(*c.loss.seg_alpha) : std::string();
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v.empty() || v == "none")
                     c.loss.seg_alpha.reset();
                   else
                     c.loss.seg_alpha = parse_double(v, "loss.seg_alpha");
                 }});

    real("train.learning_rate", "Adam learning rate", [](auto& c) -> auto& { return c.train.learning_rate; });
    integer("train.batch_size", "images per step", [](auto& c) -> auto& { return c.train.batch_size; });
    integer("train.epochs", "passes over the training set", [](auto& c) -> auto& { return c.train.epochs; });
    integer("train.image_size", "input side, must match the backbone", [](auto& c) -> auto& { return c.train.image_size; });
    integer("train.seed", "run seed", [](auto& c) -> auto& { return c.train.seed; });
    real("train.beta1", "Adam beta1", [](auto& c) -> auto& { return c.train.beta1; });
    real("train.beta2", "Adam beta2", [](auto& c) -> auto& { return c.train.beta2; });
    real("train.adam_eps", "Adam epsilon", [](auto& c) -> auto& { return c.train.adam_eps; });
    real("train.weight_decay", "decoupled weight decay", [](auto& c) -> auto& { return c.train.weight_decay; });
    integer("train.max_steps", "step cap, 0 = all epochs", [](auto& c) -> auto& { return c.train.max_steps; });
    real("train.grad_clip", "global gradient norm clip, 0 = off", [](auto& c) -> auto& { return c.train.grad_clip; });
    flag("train.cosine_schedule", "cosine learning rate decay",
         [](auto& c) -> auto& { return c.train.cosine_schedule; });

    real("fusion.alpha", "weight of p_CLS in the few-shot image score", [](auto& c) -> auto& { return c.fusion.alpha; });
    real("fusion.beta", "weight of the probability map in the few-shot map", [](auto& c) -> auto& { return c.fusion.beta; });
    flag("fusion.store_adapted", "bank adapter outputs instead of aggregated features",
         [](auto& c) -> auto& { return c.fusion.store_adapted; });

    text("data.train_root", "training dataset root", &RunConfig::train_root);
    text("data.train_layout", "training dataset layout (mvtec, visa-csv, flat-synthetic)", &RunConfig::train_layout);
    text("data.test_root", "evaluation dataset root", &RunConfig::test_root);
    text("data.test_layout", "evaluation dataset layout", &RunConfig::test_layout);

    text("eval.checkpoint", "trained checkpoint file", &RunConfig::checkpoint);
    real("eval.fpr_limit", "AUPRO false positive limit", [](auto& c) -> auto& { return c.fpr_limit; });
    integer("eval.shots", "normal reference images per category (0 = zero-shot)",
            [](auto& c) -> auto& { return c.shots; });
    f.push_back({"eval.shot_seeds", "seeds for drawing reference shots, comma separated",
                 [](const RunConfig& c) { return detail::join(c.shot_seeds); },
                 [](RunConfig& c, const std::string& v) {
                   c.shot_seeds = detail::split_list<std::uint64_t>(v, "eval.shot_seeds");
                 }});
    text("eval.category", "only this category", &RunConfig::category);

    text("predict.image", "image to score", &RunConfig::image);
    text("predict.banks", "memory bank file for fused maps", &RunConfig::banks);

    text("output.dir", "parent directory of per-run output directories", &RunConfig::output_dir, false);
    return f;
  }();
  return fields;
}

inline const ConfigField& config_field(const std::string& name) {
  for (const auto& f : config_fields())
    if (f.name == name) return f;
  throw ConfigError("unknown config key '" + name + "'");
}

inline void set_config_value(RunConfig& config, const std::string& name, const std::string& value) {
  config_field(name).set(config, value);
}

// INI text: [section] headers, key = value lines.
inline void apply_config_text(RunConfig& config, const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  for (const auto& [section, entries] : tree) {
    if (entries.empty())
      throw ConfigError("config key '" + section + "' outside a section");
    for (const auto& [key, value] : entries) set_config_value(config, section + "." + key, value.data());
  }
}

inline void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str());
}

inline std::string serialize_config(const RunConfig& config, bool hashed_only = false) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : config_fields()) {
    if (hashed_only && !f.hashed) continue;
    const auto dot = f.name.find('.');
    const std::string s = f.name.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    out << f.name.substr(dot + 1) << " = " << f.get(config) << '\n';
  }
  return out.str();
}

inline std::string config_hash(const RunConfig& config) {
  Fingerprint fp;
  fp.update(serialize_config(config, true));
  return to_hex(fp.value());
}

inline std::string resolved_weights_dir(const RunConfig& config) {
  if (!config.weights_dir.empty()) return config.weights_dir;
  const char* env = std::getenv("AFCLIP_WEIGHTS_DIR");
  return env ? std::string(env) : std::string();
}

inline void validate_config(const RunConfig& config) {
  config.model.validate();
  config.loss.validate();
  config.train.validate();
  config.fusion.validate();
  require(config.fpr_limit > 0.0 && config.fpr_limit <= 1.0, "eval.fpr_limit must lie in (0, 1]");
  require(config.shots >= 0, "eval.shots must be >= 0");
  require(!config.shot_seeds.empty(), "eval.shot_seeds is empty");
}

}  // namespace afclip
