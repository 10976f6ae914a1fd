#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "afclip/metrics.hpp"
#include "afclip/types.hpp"

namespace afclip {

// Scores of one test sample. pixel_map and mask share a shape.
struct EvaluationItem {
  std::string category;
  int label = 0;
  double image_score = 0.0;
  Matrix pixel_map;
  Matrix mask;
};

// All values in percent.
struct CategoryMetrics {
  std::string name;
  double i_auroc = 0.0;
  double i_ap = 0.0;
  double p_auroc = 0.0;
  double p_pro = 0.0;

  friend bool operator==(const CategoryMetrics&, const CategoryMetrics&) = default;
};

struct FewShotSummary {
  int shots = 0;
  std::vector<std::uint64_t> seeds;
  CategoryMetrics stddev;  // sample std over seeds of the category means

  friend bool operator==(const FewShotSummary&, const FewShotSummary&) = default;
};

inline constexpr int kReportVersion = 1;

struct MetricsReport {
  int format_version = kReportVersion;
  std::string config_hash;
  double fpr_limit = 0.3;
  std::string pixel_pooling = "pooled-per-category";
  std::vector<CategoryMetrics> categories;
  CategoryMetrics mean;
  std::optional<FewShotSummary> fewshot;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline CategoryMetrics mean_of(const std::vector<CategoryMetrics>& rows, const std::string& name = "mean") {
  CategoryMetrics m{name};
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.i_auroc += r.i_auroc;
    m.i_ap += r.i_ap;
    m.p_auroc += r.p_auroc;
    m.p_pro += r.p_pro;
  }
  const auto n = static_cast<double>(rows.size());
  m.i_auroc /= n;
  m.i_ap /= n;
  m.p_auroc /= n;
  m.p_pro /= n;
  return m;
}

inline CategoryMetrics stddev_of(const std::vector<CategoryMetrics>& rows) {
  CategoryMetrics sd{"std"};
  if (rows.size() < 2) return sd;
  const auto m = mean_of(rows);
  for (const auto& r : rows) {
    sd.i_auroc += (r.i_auroc - m.i_auroc) * (r.i_auroc - m.i_auroc);
    sd.i_ap += (r.i_ap - m.i_ap) * (r.i_ap - m.i_ap);
    sd.p_auroc += (r.p_auroc - m.p_auroc) * (r.p_auroc - m.p_auroc);
    sd.p_pro += (r.p_pro - m.p_pro) * (r.p_pro - m.p_pro);
  }
  const auto d = static_cast<double>(rows.size() - 1);
  sd.i_auroc = std::sqrt(sd.i_auroc / d);
  sd.i_ap = std::sqrt(sd.i_ap / d);
  sd.p_auroc = std::sqrt(sd.p_auroc / d);
  sd.p_pro = std::sqrt(sd.p_pro / d);
  return sd;
}

// The four metrics of one category. Pixel AUROC ranks every pixel of the
// category in one pool.
inline CategoryMetrics evaluate_category(const std::string& name,
                                         const std::vector<const EvaluationItem*>& items,
                                         double fpr_limit) {
  std::vector<double> image_scores;
  std::vector<int> image_labels;
  std::vector<double> pixel_scores;
  std::vector<int> pixel_labels;
  std::vector<Matrix> maps, masks;
  for (const auto* it : items) {
    require(it->pixel_map.rows() == it->mask.rows() && it->pixel_map.cols() == it->mask.cols(),
            "evaluate: pixel map and mask shapes differ for category " + name);
    image_scores.push_back(it->image_score);
    image_labels.push_back(it->label);
    for (Eigen::Index i = 0; i < it->pixel_map.size(); ++i) {
      pixel_scores.push_back(it->pixel_map.data()[i]);
      pixel_labels.push_back(it->mask.data()[i] > 0.5 ? 1 : 0);
    }
    maps.push_back(it->pixel_map);
    masks.push_back(it->mask);
  }
  return {name, 100.0 * auroc(image_scores, image_labels),
          100.0 * average_precision(image_scores, image_labels),
          100.0 * auroc(pixel_scores, pixel_labels), 100.0 * aupro(maps, masks, fpr_limit)};
}

// Per-category metrics in first-seen category order, plus their arithmetic mean.
inline MetricsReport evaluate(const std::vector<EvaluationItem>& items, double fpr_limit = 0.3,
                              const std::string& config_hash = {}) {
  if (items.empty()) throw MetricError("evaluate: no results");
  std::vector<std::string> order;
  std::map<std::string, std::vector<const EvaluationItem*>> groups;
  for (const auto& it : items) {
    if (!groups.count(it.category)) order.push_back(it.category);
    groups[it.category].push_back(&it);
  }
  MetricsReport report;
  report.config_hash = config_hash;
  report.fpr_limit = fpr_limit;
  for (const auto& name : order)
    report.categories.push_back(evaluate_category(name, groups[name], fpr_limit));
  report.mean = mean_of(report.categories);
  return report;
}

// ---- report file -----------------------------------------------------------

inline nlohmann::json to_json(const CategoryMetrics& m) {
  return {{"name", m.name}, {"i_auroc", m.i_auroc}, {"i_ap", m.i_ap},
          {"p_auroc", m.p_auroc}, {"p_pro", m.p_pro}};
}

inline CategoryMetrics category_from_json(const nlohmann::json& j) {
  return {j.at("name").get<std::string>(), j.at("i_auroc").get<double>(), j.at("i_ap").get<double>(),
          j.at("p_auroc").get<double>(), j.at("p_pro").get<double>()};
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : r.categories) cats.push_back(to_json(c));
  nlohmann::json j = {{"format", "afclip-metrics"},
                      {"format_version", r.format_version},
                      {"config_hash", r.config_hash},
                      {"fpr_limit", r.fpr_limit},
                      {"pixel_pooling", r.pixel_pooling},
                      {"categories", cats},
                      {"mean", to_json(r.mean)}};
  if (r.fewshot)
    j["fewshot"] = {{"shots", r.fewshot->shots},
                    {"seeds", r.fewshot->seeds},
                    {"std", to_json(r.fewshot->stddev)}};
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "afclip-metrics") throw DataError("not a metrics report");
    MetricsReport r;
    r.format_version = j.at("format_version").get<int>();
    if (r.format_version != kReportVersion)
      throw DataError("unsupported report version " + std::to_string(r.format_version));
    r.config_hash = j.at("config_hash").get<std::string>();
    r.fpr_limit = j.at("fpr_limit").get<double>();
    r.pixel_pooling = j.at("pixel_pooling").get<std::string>();
    for (const auto& c : j.at("categories")) r.categories.push_back(category_from_json(c));
    r.mean = category_from_json(j.at("mean"));
    if (j.contains("fewshot")) {
      const auto& f = j.at("fewshot");
      r.fewshot = FewShotSummary{f.at("shots").get<int>(), f.at("seeds").get<std::vector<std::uint64_t>>(),
                                 category_from_json(f.at("std"))};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metrics report: ") + e.what());
  }
}

inline void save_report(const std::string& path, const MetricsReport& r) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write report: " + path);
  out << to_json(r).dump(2) << '\n';
}

inline MetricsReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read report: " + path);
  return report_from_json(nlohmann::json::parse(in));
}

}  // namespace afclip
