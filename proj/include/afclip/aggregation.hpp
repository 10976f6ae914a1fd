#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "afclip/backbone.hpp"
#include "afclip/types.hpp"

namespace afclip {

struct WindowSpec {
  int size = 1;        // odd side length r
  double sigma = 1.0;  // Gaussian std in patch units

  void validate() const {
    require(size >= 1 && size % 2 == 1, "window size must be odd and >= 1, got " +
                                            std::to_string(size));
    require(sigma > 0.0, "window sigma must be positive");
  }
};

struct NeighborWeight {
  int row = 0;
  int col = 0;
  double weight = 0.0;
};

// Normalized Gaussian weights over the r x r window around (row, col),
// clipped to the grid and renormalized over the cells that remain.
inline std::vector<NeighborWeight> window_weights(int row, int col, const WindowSpec& spec,
                                                  int grid_side) {
  spec.validate();
  require(row >= 0 && row < grid_side && col >= 0 && col < grid_side,
          "window_weights: center outside grid");
  const int half = spec.size / 2;
  std::vector<NeighborWeight> out;
  out.reserve(static_cast<std::size_t>(spec.size * spec.size));
  double total = 0.0;
  for (int i = std::max(0, row - half); i <= std::min(grid_side - 1, row + half); ++i) {
    for (int j = std::max(0, col - half); j <= std::min(grid_side - 1, col + half); ++j) {
      const double d2 = static_cast<double>((i - row) * (i - row) + (j - col) * (j - col));
      const double w = std::exp(-d2 / (2.0 * spec.sigma * spec.sigma));
      out.push_back({i, j, w});
      total += w;
    }
  }
  for (auto& n : out) n.weight /= total;
  return out;
}

// Returns [cls; aggregated patches]. The cls row is copied untouched and a
// window of size 1 reproduces the block exactly.
inline Matrix aggregate_block(const BlockTokens& block, const WindowSpec& spec) {
  spec.validate();
  const auto n = block.patches.rows();
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  require(static_cast<Eigen::Index>(side) * side == n, "aggregate_block: patch count " +
                                                           std::to_string(n) + " is not square");
  require(block.cls.cols() == block.patches.cols(), "aggregate_block: cls/patch width mismatch");
  if (spec.size == 1) return block.stacked();

  Matrix out(n + 1, block.patches.cols());
  out.row(0) = block.cls;
  for (int h = 0; h < side; ++h) {
    for (int w = 0; w < side; ++w) {
      RowVector acc = RowVector::Zero(block.patches.cols());
      for (const auto& nb : window_weights(h, w, spec, side))
        acc += nb.weight * block.patches.row(nb.row * side + nb.col);
      out.row(1 + h * side + w) = acc;
    }
  }
  return out;
}

struct StreamKey {
  int block = 0;  // 1-based block id
  int window = 1;
  friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

// The multi-scale feature set: one (N+1) x d matrix per (block, window) pair,
// stored block-major then window.
struct AggregatedFeatureSet {
  std::vector<int> blocks;
  std::vector<int> windows;
  std::vector<StreamKey> keys;
  std::vector<Matrix> features;

  std::size_t size() const { return features.size(); }

  const Matrix& at(StreamKey key) const {
    for (std::size_t i = 0; i < keys.size(); ++i)
      if (keys[i] == key) return features[i];
    throw ConfigError("feature set has no stream (block " + std::to_string(key.block) +
                      ", window " + std::to_string(key.window) + ")");
  }
};

inline AggregatedFeatureSet build_multiscale_set(const BlockSet& blocks,
                                                 const std::vector<int>& block_ids,
                                                 const std::vector<int>& windows, double sigma) {
  require(!block_ids.empty() && !windows.empty(), "build_multiscale_set: empty block or scale set");
  AggregatedFeatureSet set;
  set.blocks = block_ids;
  set.windows = windows;
  for (int b : block_ids) {
    require(b >= 1 && b <= 4, "build_multiscale_set: block id must be in 1..4");
    const auto& block = blocks[static_cast<std::size_t>(b - 1)];
    for (int r : windows) {
      set.keys.push_back({b, r});
      set.features.push_back(aggregate_block(block, WindowSpec{r, sigma}));
    }
  }
  return set;
}

inline AggregatedFeatureSet build_multiscale_set(const BlockSet& blocks,
                                                 const std::vector<int>& windows = {1, 3, 5},
                                                 double sigma = 1.0) {
  return build_multiscale_set(blocks, {1, 2, 3, 4}, windows, sigma);
}

}  // namespace afclip
