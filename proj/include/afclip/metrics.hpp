#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "afclip/types.hpp"

namespace afclip {

// Rank-statistic AUROC (Mann-Whitney U with mid-ranks, so ties count half).
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "auroc: score and label counts differ");
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l != 0 ? 1 : 0;
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("auroc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] != 0) rank_sum += mid_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

// Precision averaged over the rank of every positive, scores descending;
// equal scores keep input order.
inline double average_precision(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "average_precision: score and label counts differ");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == 0) continue;
    ++tp;
    sum += static_cast<double>(tp) / static_cast<double>(rank + 1);
  }
  if (tp == 0) throw MetricError("average_precision: no positive samples");
  return sum / static_cast<double>(tp);
}

// 8-connected components of a binary mask. Returns per-pixel labels
// (-1 background, 0..k-1 regions) and the region count.
inline std::pair<std::vector<int>, int> label_regions(const Matrix& mask) {
  const auto rows = mask.rows();
  const auto cols = mask.cols();
  std::vector<int> labels(static_cast<std::size_t>(mask.size()), -1);
  int count = 0;
  std::vector<Eigen::Index> stack;
  for (Eigen::Index start = 0; start < mask.size(); ++start) {
    if (mask.data()[start] <= 0.5 || labels[static_cast<std::size_t>(start)] >= 0) continue;
    labels[static_cast<std::size_t>(start)] = count;
    stack.push_back(start);
    while (!stack.empty()) {
      const auto idx = stack.back();
      stack.pop_back();
      const auto r = idx / cols;
      const auto c = idx % cols;
      for (Eigen::Index dr = -1; dr <= 1; ++dr) {
        for (Eigen::Index dc = -1; dc <= 1; ++dc) {
          const auto nr = r + dr;
          const auto nc = c + dc;
          if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
          const auto n = nr * cols + nc;
          if (mask.data()[n] <= 0.5 || labels[static_cast<std::size_t>(n)] >= 0) continue;
          labels[static_cast<std::size_t>(n)] = count;
          stack.push_back(n);
        }
      }
    }
    ++count;
  }
  return {std::move(labels), count};
}

struct ProPoint {
  double fpr = 0.0;
  double pro = 0.0;
};

// Exact per-region-overlap curve: one point per distinct score threshold,
// sweeping from above the maximum score downwards, starting at (0, 0).
inline std::vector<ProPoint> pro_curve(const std::vector<Matrix>& maps,
                                       const std::vector<Matrix>& masks) {
  require(maps.size() == masks.size(), "aupro: map and mask counts differ");
  struct Pixel {
    double score;
    int region;  // global region id, -1 for normal
  };
  std::vector<Pixel> pixels;
  std::vector<double> region_size;
  std::size_t normal = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    require(maps[i].rows() == masks[i].rows() && maps[i].cols() == masks[i].cols(),
            "aupro: map and mask shapes differ");
    const auto [labels, count] = label_regions(masks[i]);
    const int offset = static_cast<int>(region_size.size());
    region_size.resize(region_size.size() + static_cast<std::size_t>(count), 0.0);
    for (Eigen::Index p = 0; p < maps[i].size(); ++p) {
      const int l = labels[static_cast<std::size_t>(p)];
      if (l < 0) {
        ++normal;
        pixels.push_back({maps[i].data()[p], -1});
      } else {
        region_size[static_cast<std::size_t>(offset + l)] += 1.0;
        pixels.push_back({maps[i].data()[p], offset + l});
      }
    }
  }
  if (region_size.empty()) throw MetricError("aupro: no anomalous pixels");
  if (normal == 0) throw MetricError("aupro: no normal pixels");

  std::sort(pixels.begin(), pixels.end(), [](const Pixel& a, const Pixel& b) { return a.score > b.score; });
  const double n_regions = static_cast<double>(region_size.size());
  std::vector<ProPoint> curve{{0.0, 0.0}};
  double overlap_sum = 0.0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < pixels.size();) {
    std::size_t j = i;
    while (j < pixels.size() && pixels[j].score == pixels[i].score) {
      if (pixels[j].region < 0)
        ++fp;
      else
        overlap_sum += 1.0 / region_size[static_cast<std::size_t>(pixels[j].region)];
      ++j;
    }
    curve.push_back({static_cast<double>(fp) / static_cast<double>(normal), overlap_sum / n_regions});
    i = j;
  }
  return curve;
}

// Trapezoid area under a monotone (fpr, value) curve up to fpr_limit,
// interpolating linearly at the limit, divided by fpr_limit.
inline double normalized_partial_area(const std::vector<ProPoint>& curve, double fpr_limit) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const auto& a = curve[i - 1];
    const auto& b = curve[i];
    if (a.fpr >= fpr_limit) break;
    if (b.fpr <= fpr_limit) {
      area += 0.5 * (b.fpr - a.fpr) * (a.pro + b.pro);
    } else {
      const double t = (fpr_limit - a.fpr) / (b.fpr - a.fpr);
      const double at_limit = a.pro + t * (b.pro - a.pro);
      area += 0.5 * (fpr_limit - a.fpr) * (a.pro + at_limit);
      break;
    }
  }
  return area / fpr_limit;
}

// Area under the per-region-overlap curve up to fpr_limit, normalized to [0, 1].
// Regions are 8-connected components of each mask; FPR pools every normal pixel.
inline double aupro(const std::vector<Matrix>& maps, const std::vector<Matrix>& masks,
                    double fpr_limit = 0.3) {
  require(fpr_limit > 0.0 && fpr_limit <= 1.0, "aupro: fpr_limit must lie in (0, 1]");
  return normalized_partial_area(pro_curve(maps, masks), fpr_limit);
}

}  // namespace afclip
