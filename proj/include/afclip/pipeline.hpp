#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "afclip/dataset.hpp"
#include "afclip/evaluate.hpp"
#include "afclip/image_io.hpp"
#include "afclip/imaging.hpp"
#include "afclip/memory_bank.hpp"
#include "afclip/synthetic.hpp"
#include "afclip/trainer.hpp"

namespace afclip {

// Labelled auxiliary data: the test split of a dataset, masks at native size.
inline std::vector<TrainingExample> training_examples(const std::vector<Sample>& samples) {
  std::vector<TrainingExample> out;
  for (const auto& s : samples) {
    if (s.split != "test") continue;
    Image img = load_image(s.image_path);
    Matrix mask = sample_mask(s, img.height, img.width);
    out.push_back({std::move(img), std::move(mask), s.label});
  }
  if (out.empty()) throw DataError("dataset has no labelled test split to train on");
  return out;
}

inline std::vector<Sample> test_samples(const std::vector<Sample>& samples, const std::string& category = {}) {
  std::vector<Sample> out;
  for (const auto& s : samples)
    if (s.split == "test" && (category.empty() || s.category == category)) out.push_back(s);
  if (out.empty())
    throw DataError("no test samples" + (category.empty() ? std::string() : " for category " + category));
  return out;
}

// Mask brought to the pixel map size; nearest neighbour keeps it binary.
inline Matrix mask_for_map(const Sample& s, int height, int width, const Matrix& map) {
  Matrix mask = sample_mask(s, height, width);
  if (mask.rows() == map.rows() && mask.cols() == map.cols()) return mask;
  return nearest_resize(mask, static_cast<int>(map.rows()), static_cast<int>(map.cols()));
}

// Draws k normal reference images of a category from its train split.
inline std::vector<Sample> select_shots(const std::vector<Sample>& samples, const std::string& category,
                                        int k, std::uint64_t seed) {
  std::vector<Sample> pool;
  for (const auto& s : samples)
    if (s.category == category && s.split == "train" && s.label == 0) pool.push_back(s);
  if (static_cast<int>(pool.size()) < k)
    throw DataError("category " + category + " has " + std::to_string(pool.size()) +
                    " normal train images, " + std::to_string(k) + " shots requested");
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

inline MemoryBanks banks_for(const std::vector<Sample>& shots, const AnomalyModel& model,
                             const std::string& category, const FusionConfig& fusion) {
  std::vector<Image> images;
  for (const auto& s : shots) images.push_back(load_image(s.image_path));
  return build_banks(images, model, category, fusion);
}

inline MetricsReport evaluate_zero_shot(const AnomalyModel& model, const std::vector<Sample>& samples,
                                        double fpr_limit, const std::string& hash = {}) {
  std::vector<EvaluationItem> items;
  for (const auto& s : samples) {
    const Image img = load_image(s.image_path);
    auto r = model.infer(img);
    Matrix mask = mask_for_map(s, img.height, img.width, r.pixel_map);
    items.push_back({s.category, s.label, r.image_score, std::move(r.pixel_map), std::move(mask)});
  }
  return evaluate(items, fpr_limit, hash);
}

// One shot draw: banks per category, fused scores for every test sample.
inline MetricsReport evaluate_fewshot_draw(const AnomalyModel& model, const std::vector<Sample>& all,
                                           const std::vector<Sample>& tests, int k, std::uint64_t seed,
                                           const FusionConfig& fusion, double fpr_limit,
                                           const std::string& hash = {}) {
  std::map<std::string, MemoryBanks> banks;
  std::vector<EvaluationItem> items;
  for (const auto& s : tests) {
    auto it = banks.find(s.category);
    if (it == banks.end())
      it = banks.emplace(s.category, banks_for(select_shots(all, s.category, k, seed), model, s.category, fusion))
               .first;
    const Image img = load_image(s.image_path);
    auto r = fewshot_infer(img, model, it->second, fusion);
    Matrix mask = mask_for_map(s, img.height, img.width, r.pixel_map);
    items.push_back({s.category, s.label, r.image_score, std::move(r.pixel_map), std::move(mask)});
  }
  return evaluate(items, fpr_limit, hash);
}

// Category metrics averaged over shot draws; std over draws of the category mean.
inline MetricsReport evaluate_fewshot(const AnomalyModel& model, const std::vector<Sample>& all,
                                      const std::vector<Sample>& tests, int k,
                                      const std::vector<std::uint64_t>& seeds, const FusionConfig& fusion,
                                      double fpr_limit, const std::string& hash = {}) {
  if (k == 0) return evaluate_zero_shot(model, tests, fpr_limit, hash);
  require(!seeds.empty(), "few-shot evaluation needs at least one shot seed");
  std::vector<MetricsReport> draws;
  for (auto seed : seeds) draws.push_back(evaluate_fewshot_draw(model, all, tests, k, seed, fusion, fpr_limit, hash));
  MetricsReport out = draws.front();
  for (std::size_t c = 0; c < out.categories.size(); ++c) {
    std::vector<CategoryMetrics> rows;
    for (const auto& d : draws) rows.push_back(d.categories[c]);
    out.categories[c] = mean_of(rows, out.categories[c].name);
  }
  out.mean = mean_of(out.categories);
  std::vector<CategoryMetrics> means;
  for (const auto& d : draws) means.push_back(d.mean);
  out.fewshot = FewShotSummary{k, seeds, stddev_of(means)};
  return out;
}

// Writes a textured-squares corpus in the flat-synthetic layout: the generated
// samples become <root>/<category>/{good,anomaly,masks}, plus `references`
// extra normal images under train/.
inline void write_flat_synthetic(const std::string& root, const std::string& category,
                                 const SyntheticConfig& config, int references) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(root) / category;
  for (const char* sub : {"train", "good", "anomaly", "masks"}) fs::create_directories(dir / sub);
  char name[32];
  int index = 0;
  for (const auto& s : make_textured_squares(config)) {
    std::snprintf(name, sizeof(name), "%03d.png", index++);
    if (s.label == 0) {
      save_image((dir / "good" / name).string(), s.image);
    } else {
      save_image((dir / "anomaly" / name).string(), s.image);
      save_gray((dir / "masks" / name).string(), s.mask);
    }
  }
  if (references <= 0) return;
  SyntheticConfig ref = config;
  ref.count = references;
  ref.anomalous_fraction = 0.0;
  ref.seed = config.seed + 1000;
  index = 0;
  for (const auto& s : make_textured_squares(ref)) {
    std::snprintf(name, sizeof(name), "%03d.png", index++);
    save_image((dir / "train" / name).string(), s.image);
  }
}

}  // namespace afclip
