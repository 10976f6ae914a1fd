#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "afclip/checkpoint.hpp"
#include "afclip/model.hpp"
#include "afclip/scoring.hpp"

namespace afclip {

struct FusionConfig {
  double alpha = 0.1;
  double beta = 0.1;
  bool store_adapted = false;  // store adapter outputs instead of aggregated features

  void validate() const {
    require(alpha >= 0.0 && beta >= 0.0, "fusion config: alpha and beta must be non-negative");
  }
};

// Normal patch features of K reference shots, one bank per (block, window)
// stream. Rows are stored as extracted; unit-normalized copies are kept for
// the search. Write-once: nothing mutates a bank after build_banks.
class MemoryBanks {
 public:
  MemoryBanks() = default;
  MemoryBanks(std::vector<StreamKey> keys, std::vector<Matrix> banks, int shots,
              std::string category, bool adapted)
      : keys_(std::move(keys)),
        banks_(std::move(banks)),
        shots_(shots),
        category_(std::move(category)),
        adapted_(adapted) {
    require(keys_.size() == banks_.size(), "memory banks: key/bank count mismatch");
    for (const auto& b : banks_) {
      check_finite(b, "memory bank");
      unit_.push_back(normalize_rows(b));
    }
  }

  const std::vector<StreamKey>& keys() const { return keys_; }
  const std::vector<Matrix>& banks() const { return banks_; }
  const Matrix& unit(std::size_t stream) const { return unit_[stream]; }
  int shots() const { return shots_; }
  const std::string& category() const { return category_; }
  bool adapted() const { return adapted_; }
  std::size_t size() const { return banks_.size(); }

  std::uint64_t checksum() const {
    Fingerprint fp;
    for (const auto& b : banks_) fp.update(b);
    return fp.value();
  }

  static Matrix normalize_rows(const Matrix& m) {
    Matrix out = m;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double n = out.row(i).norm();
      if (n > 0.0) out.row(i) /= n;
    }
    return out;
  }

 private:
  std::vector<StreamKey> keys_;
  std::vector<Matrix> banks_;
  std::vector<Matrix> unit_;
  int shots_ = 0;
  std::string category_;
  bool adapted_ = false;
};

// Features stored in (and queried against) the banks: the aggregated patch
// rows, or the adapter outputs when store_adapted is set.
inline std::vector<Matrix> bank_features(const AnomalyModel& model,
                                         const AggregatedFeatureSet& set, bool adapted) {
  std::vector<Matrix> out;
  out.reserve(set.size());
  const auto n = set.features.front().rows() - 1;
  for (const auto& f : set.features) {
    const Matrix rows = (adapted && model.config().switches.adapter) ? adapt(f, model.adapter()) : f;
    out.push_back(rows.bottomRows(n));
  }
  return out;
}

inline MemoryBanks build_banks(const std::vector<Image>& shots, const AnomalyModel& model,
                               const std::string& category, const FusionConfig& fusion = {}) {
  if (shots.empty()) throw ConfigError("build_banks: at least one normal shot is required");
  std::vector<StreamKey> keys;
  std::vector<Matrix> banks;
  for (std::size_t k = 0; k < shots.size(); ++k) {
    const auto set = model.features(shots[k]);
    const auto feats = bank_features(model, set, fusion.store_adapted);
    if (k == 0) {
      keys = set.keys;
      for (const auto& f : feats)
        banks.emplace_back(static_cast<Eigen::Index>(shots.size()) * f.rows(), f.cols());
    }
    for (std::size_t s = 0; s < feats.size(); ++s)
      banks[s].middleRows(static_cast<Eigen::Index>(k) * feats[s].rows(), feats[s].rows()) = feats[s];
  }
  return MemoryBanks(std::move(keys), std::move(banks), static_cast<int>(shots.size()), category,
                     fusion.store_adapted);
}

struct Neighbor {
  Eigen::Index index = -1;
  double distance = 0.0;  // (1 - cos) / 2
};

// Exhaustive nearest neighbour of every query row against a unit-row bank,
// via one matrix product. Ties resolve to the lowest bank index.
inline std::vector<Neighbor> nearest_neighbors(const Matrix& queries, const Matrix& unit_bank) {
  require(queries.cols() == unit_bank.cols(), "nearest_neighbors: feature width mismatch");
  require(unit_bank.rows() > 0, "nearest_neighbors: empty bank");
  const Matrix q = MemoryBanks::normalize_rows(queries);
  const Matrix cos = q * unit_bank.transpose();
  std::vector<Neighbor> out(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index i = 0; i < cos.rows(); ++i) {
    Eigen::Index best = 0;
    double best_cos = cos(i, 0);
    for (Eigen::Index j = 1; j < cos.cols(); ++j) {
      if (cos(i, j) > best_cos) {
        best_cos = cos(i, j);
        best = j;
      }
    }
    out[static_cast<std::size_t>(i)] = {best, (1.0 - best_cos) / 2.0};
  }
  return out;
}

// A_i: nearest-neighbour distance averaged over streams, as a grid.
inline Matrix patch_distance_scores(const std::vector<Matrix>& query_streams,
                                    const MemoryBanks& banks) {
  require(query_streams.size() == banks.size(),
          "patch_distance_scores: query has " + std::to_string(query_streams.size()) +
              " streams, banks have " + std::to_string(banks.size()));
  const auto n = query_streams.front().rows();
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  require(static_cast<Eigen::Index>(side) * side == n, "patch_distance_scores: non-square grid");
  Vector acc = Vector::Zero(n);
  for (std::size_t s = 0; s < query_streams.size(); ++s) {
    const auto nn = nearest_neighbors(query_streams[s], banks.unit(s));
    for (Eigen::Index i = 0; i < n; ++i) acc(i) += nn[static_cast<std::size_t>(i)].distance;
  }
  acc /= static_cast<double>(query_streams.size());
  Matrix grid(side, side);
  for (int h = 0; h < side; ++h)
    for (int w = 0; w < side; ++w) grid(h, w) = std::clamp(acc(h * side + w), 0.0, 1.0);
  return grid;
}

struct FusedResult {
  double image_score = 0.0;  // S_img
  Matrix patch_map;          // S_map on the patch grid
  Matrix pixel_map;          // S_map upsampled and smoothed
};

// S_img = max A + alpha * p_CLS, S_map = A + beta * P. The sum is left
// unnormalized, so S_img may exceed 1.
inline FusedResult fuse_scores(const Matrix& distances, const AnomalyResult& zero_shot,
                               const FusionConfig& config, const ScoreConfig& score) {
  config.validate();
  require(distances.rows() == zero_shot.patch_probs.rows() &&
              distances.cols() == zero_shot.patch_probs.cols(),
          "fuse_scores: distance grid and probability grid differ in shape");
  FusedResult out;
  out.image_score = distances.maxCoeff() + config.alpha * zero_shot.image_score;
  out.patch_map = distances + config.beta * zero_shot.patch_probs;
  out.pixel_map = upsample_and_smooth(out.patch_map, score);
  return out;
}

// Few-shot scoring of one image: zero-shot pass plus memory-bank distances.
inline FusedResult fewshot_infer(const Image& image, const AnomalyModel& model,
                                 const MemoryBanks& banks, const FusionConfig& fusion) {
  const auto set = model.features(image);
  const AnomalyResult zs = model.score(set);
  const Matrix distances =
      patch_distance_scores(bank_features(model, set, banks.adapted()), banks);
  return fuse_scores(distances, zs, fusion, model.config().resolved_score(model.backbone().spec()));
}

inline constexpr std::uint32_t kBankVersion = 1;
inline constexpr char kBankMagic[8] = {'A', 'F', 'C', 'L', 'I', 'P', 'M', 'B'};

inline void save_banks(const std::string& path, const MemoryBanks& banks,
                       std::uint64_t backbone_checksum) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open bank file for writing: " + path);
  nlohmann::json keys = nlohmann::json::array();
  for (const auto& k : banks.keys()) keys.push_back({k.block, k.window});
  detail::write_header(out, kBankMagic, kBankVersion,
                       {{"category", banks.category()},
                        {"shots", banks.shots()},
                        {"adapted", banks.adapted()},
                        {"backbone_checksum", to_hex(backbone_checksum)},
                        {"keys", keys}});
  for (const auto& b : banks.banks()) detail::write_matrix(out, b);
  if (!out) throw DataError("failed writing bank file: " + path);
}

inline MemoryBanks load_banks(const std::string& path, const Backbone& backbone) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open bank file: " + path);
  const auto meta = detail::read_header(in, kBankMagic, kBankVersion, "memory bank");
  if (std::stoull(meta.at("backbone_checksum").get<std::string>(), nullptr, 16) !=
      backbone.weight_checksum())
    throw ChecksumError("memory banks were built with different backbone weights: " + path);
  std::vector<StreamKey> keys;
  std::vector<Matrix> banks;
  for (const auto& k : meta.at("keys")) {
    keys.push_back({k.at(0).get<int>(), k.at(1).get<int>()});
    banks.push_back(detail::read_matrix(in, "bank"));
  }
  return MemoryBanks(std::move(keys), std::move(banks), meta.at("shots").get<int>(),
                     meta.at("category").get<std::string>(), meta.at("adapted").get<bool>());
}

}  // namespace afclip
