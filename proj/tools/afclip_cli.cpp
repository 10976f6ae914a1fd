#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "afclip/afclip.hpp"

namespace fs = std::filesystem;
using namespace afclip;

namespace {

struct Command {
  CLI::App* app = nullptr;
  std::string config_file;
  bool stub = false;
  std::map<std::string, std::string> values;
};

// short spellings for the keys people type most
const std::map<std::string, std::string> kAliases = {
    {"eval.checkpoint", "--checkpoint"}, {"eval.shots", "--shots"},   {"eval.shot_seeds", "--seeds"},
    {"eval.category", "--category"},     {"predict.image", "--image"}, {"predict.banks", "--banks"},
    {"output.dir", "--out"},             {"train.seed", "--seed"}};

Command& add_command(CLI::App& app, std::map<std::string, Command>& commands, const std::string& name,
                     const std::string& help) {
  Command& cmd = commands[name];
  cmd.app = app.add_subcommand(name, help);
  cmd.app->add_option("-c,--config", cmd.config_file, "INI config file");
  cmd.app->add_flag("--stub-backbone", cmd.stub, "use the small built-in backbone (CPU smoke runs)");
  for (const auto& f : config_fields()) {
    std::string names = "--" + f.name;
    if (auto it = kAliases.find(f.name); it != kAliases.end()) names += "," + it->second;
    cmd.app->add_option(names, cmd.values[f.name], f.help);
  }
  return cmd;
}

RunConfig resolve(const Command& cmd) {
  RunConfig config;
  if (!cmd.config_file.empty()) apply_config_file(config, cmd.config_file);
  if (cmd.stub) {
    config.backbone_id = "stub-32";
    config.train.image_size = StubConfig{}.patch_size * StubConfig{}.grid_side;
    config.model.score.output_size = 0;
  }
  for (const auto& f : config_fields()) {
    std::string names = "--" + f.name;
    if (cmd.app->count(names) > 0) f.set(config, cmd.values.at(f.name));
  }
  validate_config(config);
  return config;
}

fs::path run_directory(const RunConfig& config) {
  const fs::path dir = fs::path(config.output_dir) / config_hash(config);
  fs::create_directories(dir);
  std::ofstream(dir / "config.ini") << serialize_config(config);
  return dir;
}

std::unique_ptr<Backbone> backbone_for(const RunConfig& config) {
  return make_backbone(config.backbone_id, resolved_weights_dir(config));
}

std::vector<Sample> dataset(const std::string& root, const std::string& layout, const char* key) {
  if (root.empty()) throw ConfigError(std::string("no dataset given (set ") + key + ")");
  return load_dataset(root, layout);
}

Checkpoint checkpoint_for(const RunConfig& config) {
  if (config.checkpoint.empty()) throw ConfigError("no checkpoint given (set eval.checkpoint)");
  return load_checkpoint(config.checkpoint);
}

int cmd_train(const RunConfig& config) {
  const auto backbone = backbone_for(config);
  const auto samples = dataset(config.train_root, config.train_layout, "data.train_root");
  const auto data = training_examples(samples);
  const fs::path dir = run_directory(config);
  const auto start = std::chrono::steady_clock::now();
  const auto result = train(*backbone, data, config.model, config.loss, config.train,
                            fs::path(config.train_root).filename().string(), [](const StepRecord& r) {
                              if (r.step % 10 == 0 || r.step == 1)
                                std::cerr << "step " << r.step << " loss " << r.total << '\n';
                            });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  save_checkpoint((dir / "checkpoint.afck").string(), result.checkpoint);
  std::ofstream log(dir / "loss.log");
  write_loss_log(log, result.log);
  if (result.pal_skipped > 0)
    std::cerr << "patch alignment loss skipped on " << result.pal_skipped << " batches without anomalies\n";
  std::cerr << "trained " << result.checkpoint.steps << " steps in " << seconds << " s\n";
  std::cout << (dir / "checkpoint.afck").string() << '\n';
  return 0;
}

void print_report(const MetricsReport& r) {
  std::cerr << "category I-AUROC I-AP P-AUROC P-PRO\n";
  for (const auto& c : r.categories)
    std::cerr << c.name << ' ' << c.i_auroc << ' ' << c.i_ap << ' ' << c.p_auroc << ' ' << c.p_pro << '\n';
  std::cerr << "mean " << r.mean.i_auroc << ' ' << r.mean.i_ap << ' ' << r.mean.p_auroc << ' ' << r.mean.p_pro << '\n';
}

int cmd_eval_zero(const RunConfig& config) {
  const auto backbone = backbone_for(config);
  const auto model = model_from_checkpoint(checkpoint_for(config), *backbone);
  const auto samples = dataset(config.test_root, config.test_layout, "data.test_root");
  const fs::path dir = run_directory(config);
  const auto report =
      evaluate_zero_shot(model, test_samples(samples, config.category), config.fpr_limit, config_hash(config));
  save_report((dir / "metrics_zero.json").string(), report);
  print_report(report);
  std::cout << (dir / "metrics_zero.json").string() << '\n';
  return 0;
}

int cmd_eval_fewshot(const RunConfig& config) {
  if (config.shots == 0) return cmd_eval_zero(config);
  const auto backbone = backbone_for(config);
  const auto model = model_from_checkpoint(checkpoint_for(config), *backbone);
  const auto samples = dataset(config.test_root, config.test_layout, "data.test_root");
  const fs::path dir = run_directory(config);
  const auto report = evaluate_fewshot(model, samples, test_samples(samples, config.category), config.shots,
                                       config.shot_seeds, config.fusion, config.fpr_limit, config_hash(config));
  const auto file = dir / ("metrics_fewshot_k" + std::to_string(config.shots) + ".json");
  save_report(file.string(), report);
  print_report(report);
  const auto& sd = report.fewshot->stddev;
  std::cerr << "std " << sd.i_auroc << ' ' << sd.i_ap << ' ' << sd.p_auroc << ' ' << sd.p_pro << '\n';
  std::cout << file.string() << '\n';
  return 0;
}

int cmd_build_banks(const RunConfig& config) {
  require(config.shots > 0, "build-banks needs eval.shots > 0");
  require(!config.category.empty(), "build-banks needs eval.category");
  const auto backbone = backbone_for(config);
  const auto model = model_from_checkpoint(checkpoint_for(config), *backbone);
  const auto samples = dataset(config.test_root, config.test_layout, "data.test_root");
  const fs::path dir = run_directory(config);
  const auto banks = banks_for(select_shots(samples, config.category, config.shots, config.shot_seeds.front()),
                               model, config.category, config.fusion);
  const auto file = dir / ("banks_" + config.category + ".afmb");
  save_banks(file.string(), banks, backbone->weight_checksum());
  std::cout << file.string() << '\n';
  return 0;
}

int cmd_predict(const RunConfig& config) {
  if (config.image.empty()) throw ConfigError("no image given (set predict.image)");
  const auto backbone = backbone_for(config);
  const auto model = model_from_checkpoint(checkpoint_for(config), *backbone);
  const Image image = load_image(config.image);
  const fs::path dir = run_directory(config);
  const std::string stem = fs::path(config.image).stem().string();
  double score = 0.0;
  Matrix map;
  std::string mode;
  if (config.banks.empty()) {
    auto r = model.infer(image);
    score = r.image_score;
    map = std::move(r.pixel_map);
    mode = "zero-shot";
  } else {
    const auto banks = load_banks(config.banks, *backbone);
    auto r = fewshot_infer(image, model, banks, config.fusion);
    score = r.image_score;
    map = std::move(r.pixel_map);
    mode = "fused";
  }
  const double hi = std::max(1.0, map.maxCoeff());
  save_gray((dir / (stem + "_heatmap.png")).string(), map, 0.0, hi);
  save_npy((dir / (stem + "_heatmap.npy")).string(), map);
  std::ofstream((dir / (stem + "_score.txt"))) << config.image << ' ' << mode << ' ' << detail::format_double(score)
                                               << '\n';
  std::cout << config.image << ' ' << mode << ' ' << score << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AF-CLIP anomaly detection: training, zero/few-shot evaluation, prediction"};
  app.require_subcommand(1);
  std::map<std::string, Command> commands;
  add_command(app, commands, "train", "train the adapter and prompts on a labelled dataset");
  add_command(app, commands, "eval-zero", "zero-shot metrics for a checkpoint");
  add_command(app, commands, "eval-fewshot", "few-shot metrics with memory banks, mean and std over shot seeds");
  add_command(app, commands, "build-banks", "write the memory banks of one category");
  add_command(app, commands, "predict", "heatmap and score for one image");

  std::string synth_root, synth_category = "squares";
  SyntheticConfig synth;
  int synth_refs = 8;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic textured-squares dataset (flat-synthetic layout)");
  synth_cmd->add_option("--root", synth_root, "output root")->required();
  synth_cmd->add_option("--category", synth_category, "category name");
  synth_cmd->add_option("--count", synth.count, "test images");
  synth_cmd->add_option("--size", synth.size, "image side");
  synth_cmd->add_option("--anomalous-fraction", synth.anomalous_fraction, "share of defective images");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--references", synth_refs, "normal reference images under train/");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (synth_cmd->parsed()) {
      write_flat_synthetic(synth_root, synth_category, synth, synth_refs);
      std::cout << (fs::path(synth_root) / synth_category).string() << '\n';
      return 0;
    }
    for (auto& [name, cmd] : commands) {
      if (!cmd.app->parsed()) continue;
      const RunConfig config = resolve(cmd);
      if (name == "train") return cmd_train(config);
      if (name == "eval-zero") return cmd_eval_zero(config);
      if (name == "eval-fewshot") return cmd_eval_fewshot(config);
      if (name == "build-banks") return cmd_build_banks(config);
      if (name == "predict") return cmd_predict(config);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kInternal);
  }
  return static_cast<int>(ExitCode::kInternal);
}
