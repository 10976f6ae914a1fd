#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace afclip;
using afclip::testing::random_matrix;

namespace {

double weight_at(const std::vector<NeighborWeight>& w, int row, int col) {
  for (const auto& n : w)
    if (n.row == row && n.col == col) return n.weight;
  return 0.0;
}

BlockTokens block_of(const Matrix& patches, const RowVector& cls) { return BlockTokens{1, cls, patches}; }

// Naive double loop straight from the weight formula, clipped and renormalized.
Matrix naive_aggregate(const Matrix& patches, int side, int r, double sigma) {
  Matrix out = Matrix::Zero(patches.rows(), patches.cols());
  const int half = r / 2;
  for (int h = 0; h < side; ++h)
    for (int w = 0; w < side; ++w) {
      double total = 0.0;
      for (int i = h - half; i <= h + half; ++i)
        for (int j = w - half; j <= w + half; ++j) {
          if (i < 0 || j < 0 || i >= side || j >= side) continue;
          total += std::exp(-((i - h) * (i - h) + (j - w) * (j - w)) / (2.0 * sigma * sigma));
        }
      for (int i = h - half; i <= h + half; ++i)
        for (int j = w - half; j <= w + half; ++j) {
          if (i < 0 || j < 0 || i >= side || j >= side) continue;
          const double eta = std::exp(-((i - h) * (i - h) + (j - w) * (j - w)) / (2.0 * sigma * sigma)) / total;
          out.row(h * side + w) += eta * patches.row(i * side + j);
        }
    }
  return out;
}

}  // namespace

TEST(WindowWeights, SingletonWindow) {
  const auto w = window_weights(3, 4, {1, 1.0}, 8);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].row, 3);
  EXPECT_EQ(w[0].col, 4);
  EXPECT_EQ(w[0].weight, 1.0);
}

TEST(WindowWeights, InteriorThreeByThree) {
  const auto w = window_weights(4, 4, {3, 1.0}, 8);
  ASSERT_EQ(w.size(), 9u);
  const double total = 1.0 + 4.0 * std::exp(-0.5) + 4.0 * std::exp(-1.0);
  EXPECT_NEAR(total, 4.8976, 1e-4);
  EXPECT_NEAR(weight_at(w, 4, 4), 0.2042, 1e-4);
  EXPECT_NEAR(weight_at(w, 3, 4), 0.1238, 1e-4);
  EXPECT_NEAR(weight_at(w, 4, 5), 0.1238, 1e-4);
  EXPECT_NEAR(weight_at(w, 3, 3), 0.0751, 1e-4);
  EXPECT_NEAR(weight_at(w, 5, 5), 0.0751, 1e-4);
  EXPECT_NEAR(weight_at(w, 4, 4), 1.0 / total, 1e-12);
}

TEST(WindowWeights, SumToOneEverywhere) {
  for (int r : {1, 3, 5, 7})
    for (double sigma : {0.5, 1.0, 2.5})
      for (int h = 0; h < 6; ++h)
        for (int c = 0; c < 6; ++c) {
          double sum = 0.0;
          for (const auto& n : window_weights(h, c, {r, sigma}, 6)) sum += n.weight;
          EXPECT_NEAR(sum, 1.0, 1e-9) << "r=" << r << " sigma=" << sigma << " at " << h << "," << c;
        }
}

TEST(WindowWeights, CornerIsClipped) {
  const auto w = window_weights(0, 0, {3, 1.0}, 8);
  EXPECT_EQ(w.size(), 4u);
  for (const auto& n : w) {
    EXPECT_GE(n.row, 0);
    EXPECT_GE(n.col, 0);
  }
}

TEST(WindowWeights, RotationalSymmetry) {
  const auto w = window_weights(4, 4, {5, 1.3}, 9);
  for (int di = -2; di <= 2; ++di)
    for (int dj = -2; dj <= 2; ++dj)
      EXPECT_NEAR(weight_at(w, 4 + di, 4 + dj), weight_at(w, 4 - dj, 4 + di), 1e-15);
}

TEST(WindowWeights, InvalidSpecs) {
  EXPECT_THROW(window_weights(0, 0, {2, 1.0}, 8), ConfigError);
  EXPECT_THROW(window_weights(0, 0, {3, 0.0}, 8), ConfigError);
  EXPECT_THROW(window_weights(0, 0, {0, 1.0}, 8), ConfigError);
}

TEST(AggregateBlock, IdentityAtSizeOne) {
  const Matrix p = random_matrix(64, 32, 1);
  const RowVector cls = random_matrix(1, 32, 2);
  const Matrix out = aggregate_block(block_of(p, cls), {1, 1.0});
  EXPECT_TRUE(out.row(0) == cls);
  EXPECT_TRUE(out.bottomRows(64) == p);
}

TEST(AggregateBlock, ClsRowUntouched) {
  const Matrix p = random_matrix(64, 8, 3);
  const RowVector cls = random_matrix(1, 8, 4);
  EXPECT_TRUE(aggregate_block(block_of(p, cls), {5, 1.0}).row(0) == cls);
}

TEST(AggregateBlock, ConstancyPreserved) {
  const RowVector v = random_matrix(1, 16, 5);
  const Matrix p = v.replicate(49, 1);
  for (int r : {1, 3, 5}) {
    const Matrix out = aggregate_block(block_of(p, v), {r, 1.0});
    for (Eigen::Index i = 1; i < out.rows(); ++i) EXPECT_LT((out.row(i) - v).norm(), 1e-12);
  }
}

TEST(AggregateBlock, Linearity) {
  const Matrix x = random_matrix(36, 8, 6);
  const Matrix y = random_matrix(36, 8, 7);
  const RowVector c = RowVector::Zero(8);
  const double a = 1.7, b = -0.4;
  for (int r : {3, 5}) {
    const Matrix lhs = aggregate_block(block_of(a * x + b * y, c), {r, 1.0});
    const Matrix rhs = a * aggregate_block(block_of(x, c), {r, 1.0}) + b * aggregate_block(block_of(y, c), {r, 1.0});
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(AggregateBlock, ImpulseSpreadsToNeighbours) {
  Matrix p = Matrix::Zero(49, 4);
  const RowVector e = RowVector::Unit(4, 2);
  p.row(3 * 7 + 3) = e;
  const Matrix out = aggregate_block(block_of(p, RowVector::Zero(4)), {3, 1.0});
  for (int idx : {2 * 7 + 3, 4 * 7 + 3, 3 * 7 + 2, 3 * 7 + 4}) EXPECT_NEAR(out(1 + idx, 2), 0.1238, 1e-4);
  EXPECT_NEAR(out(1 + 3 * 7 + 3, 2), 0.2042, 1e-4);
  EXPECT_EQ(out(1 + 0, 2), 0.0);
}

TEST(AggregateBlock, MatchesNaiveOracleOnFiveByFive) {
  const Matrix p = random_matrix(25, 6, 8);
  for (int r : {1, 3, 5})
    for (double sigma : {0.7, 1.0, 2.0}) {
      const Matrix fast = aggregate_block(block_of(p, RowVector::Zero(6)), {r, sigma});
      const Matrix slow = naive_aggregate(p, 5, r, sigma);
      EXPECT_LT((fast.bottomRows(25) - slow).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(MultiscaleSet, CardinalityAndIdentityEntries) {
  StubBackbone bb;
  const auto blocks = bb.encode_image_blocks(prepare_image(afclip::testing::pattern_image(64), bb.spec()));
  const auto set = build_multiscale_set(blocks, {1, 3, 5}, 1.0);
  EXPECT_EQ(set.size(), 12u);
  for (const auto& f : set.features) {
    EXPECT_EQ(f.rows(), 65);
    EXPECT_EQ(f.cols(), 32);
  }
  for (int b = 1; b <= 4; ++b) EXPECT_TRUE(set.at({b, 1}) == blocks[static_cast<std::size_t>(b - 1)].stacked());
}

TEST(MultiscaleSet, ZeroBlocksGiveZeroSet) {
  BlockSet blocks;
  for (int b = 0; b < 4; ++b) blocks[static_cast<std::size_t>(b)] = {b + 1, RowVector::Zero(4), Matrix::Zero(16, 4)};
  const auto set = build_multiscale_set(blocks, {1, 3, 5}, 1.0);
  for (const auto& f : set.features) EXPECT_TRUE(f.isZero(0.0));
}

TEST(MultiscaleSet, MissingKeyIsAnError) {
  BlockSet blocks;
  for (int b = 0; b < 4; ++b) blocks[static_cast<std::size_t>(b)] = {b + 1, RowVector::Zero(4), Matrix::Zero(16, 4)};
  const auto set = build_multiscale_set(blocks, {4}, {1}, 1.0);
  EXPECT_EQ(set.size(), 1u);
  EXPECT_THROW(set.at({2, 1}), ConfigError);
}
