#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_support.hpp"

using namespace afclip;
using afclip::testing::numeric_gradient;
using afclip::testing::random_matrix;
using afclip::testing::relative_error;

namespace {

// Textbook binary focal loss for a hard label.
double focal_reference(double p, int y, double gamma, double alpha_pos) {
  const double pt = y == 1 ? p : 1.0 - p;
  const double w = y == 1 ? alpha_pos : 1.0 - alpha_pos;
  return -w * std::pow(1.0 - pt, gamma) * std::log(pt);
}

double cos_rows(const RowVector& a, const RowVector& b) { return a.dot(b) / (a.norm() * b.norm()); }

// Direct double sum over every patch pair.
double alignment_brute_force(const std::vector<Matrix>& streams, const std::vector<int>& abnormal) {
  double total = 0.0;
  for (const auto& z : streams) {
    double cross = 0.0, within = 0.0;
    double nn = 0, na = 0;
    for (int f : abnormal) (f ? na : nn) += 1;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      for (Eigen::Index j = 0; j < z.rows(); ++j) {
        const double c = cos_rows(z.row(i), z.row(j));
        const bool ai = abnormal[std::size_t(i)] != 0, aj = abnormal[std::size_t(j)] != 0;
        if (!ai && aj) cross += c;
        if (ai == aj) within += c;
      }
    total += std::max(0.0, cross / (nn * na) - within / (nn * nn + na * na));
  }
  return total / static_cast<double>(streams.size());
}

}  // namespace

TEST(Focal, HandValues) {
  // (1 - 0.5)^2 ln 2
  EXPECT_NEAR(classification_loss(0.5, 1, {}), 0.1733, 1e-4);
  EXPECT_NEAR(classification_loss(0.5, 1, {}), 0.25 * std::log(2.0), 1e-15);
  // gamma 0 reduces to cross-entropy
  EXPECT_NEAR(focal_prob(0.51, 1.0, {0.0, {}}).value, 0.6733, 1e-4);
  // (1 - 0.7)^2 * -ln 0.7 under symmetric weights
  EXPECT_NEAR(focal_prob(0.7, 1.0, {2.0, {}}).value, 0.09 * -std::log(0.7), 1e-15);
  EXPECT_NEAR(focal_prob(0.3, 0.0, {2.0, 0.25}).value, focal_reference(0.3, 0, 2.0, 0.25), 1e-15);
  EXPECT_NEAR(focal_prob(0.3, 1.0, {2.0, 0.25}).value, focal_reference(0.3, 1, 2.0, 0.25), 1e-15);
}

TEST(Focal, LabelSymmetryWithoutAlpha) {
  for (double p : {0.05, 0.3, 0.5, 0.8, 0.99})
    EXPECT_NEAR(focal_prob(p, 1.0, {2.0, {}}).value, focal_prob(1.0 - p, 0.0, {2.0, {}}).value, 1e-14);
}

TEST(Focal, NonNegativeAndSaturates) {
  for (double p = 0.0; p <= 1.0; p += 0.05) {
    EXPECT_GE(focal_prob(p, 1.0, {2.0, 0.25}).value, 0.0);
    EXPECT_TRUE(std::isfinite(focal_prob(p, 0.0, {2.0, 0.25}).value));
  }
  EXPECT_EQ(focal_prob(1.0, 1.0, {2.0, {}}).value, 0.0);
}

TEST(Focal, ProbabilityGradient) {
  for (double target : {0.0, 1.0, 0.4})
    for (double p : {0.1, 0.45, 0.9}) {
      const FocalParams fp{2.0, 0.25};
      const double h = 1e-6;
      const double num = (focal_prob(p + h, target, fp).value - focal_prob(p - h, target, fp).value) / (2 * h);
      EXPECT_NEAR(focal_prob(p, target, fp).grad, num, 1e-6);
    }
}

TEST(Focal, LogitFormAgreesAndDifferentiates) {
  for (double target : {0.0, 1.0})
    for (double x : {-3.0, -0.2, 0.0, 1.5, 4.0}) {
      const FocalParams fp{2.0, 0.25};
      EXPECT_NEAR(focal_logit(x, target, fp).value, focal_prob(stable_sigmoid(x), target, fp).value, 1e-12);
      const double h = 1e-6;
      const double num = (focal_logit(x + h, target, fp).value - focal_logit(x - h, target, fp).value) / (2 * h);
      EXPECT_NEAR(focal_logit(x, target, fp).grad, num, 1e-6);
    }
  EXPECT_TRUE(std::isfinite(focal_logit(-800.0, 1.0, {}).value));
  EXPECT_LT(focal_logit(-800.0, 1.0, {}).grad, -0.5);
}

TEST(ClassificationLoss, RejectsBadProbability) {
  EXPECT_THROW(classification_loss(1.2, 1, {}), ConfigError);
  EXPECT_NEAR(classification_loss(0.75, 1, {}), 0.0625 * -std::log(0.75), 1e-15);
}

TEST(LossConfig, AlphaRange) {
  LossConfig c;
  c.validate();
  c.seg_alpha = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.seg_alpha.reset();
  c.lambda2 = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ResizeMask, BlockMaxPooling) {
  Matrix m = Matrix::Zero(4, 4);
  m(0, 1) = 1.0;
  Matrix expect(2, 2);
  expect << 1, 0, 0, 0;
  EXPECT_TRUE(resize_mask(m, 2, 2) == expect);
}

TEST(ResizeMask, NeverDropsAnomalies) {
  for (int trial = 0; trial < 50; ++trial) {
    Matrix m = Matrix::Zero(37, 37);
    m(trial % 37, (trial * 7) % 37) = 1.0;
    EXPECT_GE(resize_mask(m, 8, 8).sum(), 1.0) << trial;
    EXPECT_LE(resize_mask(m, 8, 8).sum(), 4.0) << trial;
    EXPECT_GE(resize_mask(m, 5, 9).sum(), 1.0);
  }
  EXPECT_EQ(resize_mask(Matrix::Zero(37, 37), 8, 8).sum(), 0.0);
}

TEST(SegmentationLoss, HalfEverywhere) {
  LossConfig c;
  c.seg_alpha.reset();
  EXPECT_NEAR(segmentation_loss(Matrix::Constant(3, 3, 0.5), Matrix::Ones(3, 3), c).value, 0.6733, 1e-4);
  EXPECT_NEAR(segmentation_loss_from_logits(Matrix::Zero(3, 3), Matrix::Ones(3, 3), c).value, 0.6733, 1e-4);
}

TEST(SegmentationLoss, ZeroAtPerfectPrediction) {
  Matrix t = Matrix::Zero(4, 4);
  t(1, 2) = 1.0;
  EXPECT_EQ(segmentation_loss(t, t, {}).value, 0.0);
  EXPECT_EQ(classification_loss(1.0, 1, {}), 0.0);
  EXPECT_EQ(classification_loss(0.0, 0, {}), 0.0);
}

TEST(SegmentationLoss, HandValue) {
  Matrix p(1, 2), t(1, 2);
  p << 0.7, 0.2;
  t << 1, 0;
  LossConfig c;
  const double expect = (focal_reference(0.7, 1, 2.0, 0.25) + 0.3 + focal_reference(0.2, 0, 2.0, 0.25) + 0.2) / 2.0;
  EXPECT_NEAR(segmentation_loss(p, t, c).value, expect, 1e-14);
}

TEST(SegmentationLoss, PermutationInvariant) {
  Matrix p = random_matrix(4, 4, 3).cwiseAbs().cwiseMin(0.99);
  Matrix t = (random_matrix(4, 4, 4).array() > 0.0).cast<double>().matrix();
  Matrix pt = p.transpose(), tt = t.transpose();
  EXPECT_NEAR(segmentation_loss(p, t, {}).value, segmentation_loss(pt, tt, {}).value, 1e-14);
  EXPECT_THROW(segmentation_loss(p, Matrix::Zero(3, 4), {}), ConfigError);
}

TEST(SegmentationLoss, LogitGradient) {
  Matrix x = random_matrix(3, 3, 5, 2.0);
  Matrix t = (random_matrix(3, 3, 6).array() > 0.0).cast<double>().matrix();
  const LossConfig c;
  const auto loss = segmentation_loss_from_logits(x, t, c);
  const Matrix num = numeric_gradient(x, [&] { return segmentation_loss_from_logits(x, t, c).value; }, 1e-6);
  EXPECT_LT(relative_error(loss.grad, num), 1e-5);
  Matrix p = x.unaryExpr([](double v) { return stable_sigmoid(v); });
  EXPECT_NEAR(segmentation_loss(p, t, c).value, loss.value, 1e-12);
}

TEST(SegmentationLoss, ProbabilityGradient) {
  Matrix p = random_matrix(3, 3, 9).cwiseAbs().cwiseMin(0.9).cwiseMax(0.05);
  Matrix t = (random_matrix(3, 3, 10).array() > 0.0).cast<double>().matrix();
  const auto loss = segmentation_loss(p, t, {});
  const Matrix num = numeric_gradient(p, [&] { return segmentation_loss(p, t, {}).value; }, 1e-7);
  EXPECT_LT(relative_error(loss.grad, num), 1e-5);
}

TEST(AlignmentLoss, BisectorCase) {
  const double theta = std::acos(-0.8);
  Matrix z(3, 2);
  z << 1, 0, std::cos(theta), std::sin(theta), std::cos(theta / 2), std::sin(theta / 2);
  const auto l = patch_alignment_loss({z}, {0, 0, 1});
  EXPECT_FALSE(l.skipped);
  EXPECT_NEAR(l.value, 0.0363, 1e-4);
  EXPECT_NEAR(l.value, std::cos(theta / 2) - 0.28, 1e-12);
}

TEST(AlignmentLoss, OrthogonalGroupsGiveZero) {
  Matrix z(4, 2);
  z << 1, 0, 2, 0, 0, 1, 0, 3;
  EXPECT_EQ(patch_alignment_loss({z}, {0, 0, 1, 1}).value, 0.0);
}

TEST(AlignmentLoss, IdenticalFeaturesGiveZero) {
  Matrix z = Matrix::Ones(4, 3);
  const auto l = patch_alignment_loss({z}, {0, 1, 0, 1});
  EXPECT_LE(l.value, 1e-12);
  EXPECT_TRUE(l.grads[0].isZero(1e-12));
}

TEST(AlignmentLoss, SkippedWithoutBothGroups) {
  const Matrix z = random_matrix(4, 3, 1);
  EXPECT_TRUE(patch_alignment_loss({z}, {0, 0, 0, 0}).skipped);
  EXPECT_TRUE(patch_alignment_loss({z}, {1, 1, 1, 1}).skipped);
  EXPECT_THROW(patch_alignment_loss({z}, {0, 1}), ConfigError);
}

TEST(AlignmentLoss, MatchesBruteForce) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::vector<Matrix> streams{random_matrix(20, 5, seed), random_matrix(20, 5, seed + 100)};
    // share a direction so the hinge is active in some cases
    for (auto& s : streams) s.col(0).array() += 1.5;
    std::vector<int> flags(20);
    for (int i = 0; i < 20; ++i) flags[std::size_t(i)] = (i * 7 + int(seed)) % 3 == 0;
    EXPECT_NEAR(patch_alignment_loss(streams, flags).value, alignment_brute_force(streams, flags), 1e-12);
  }
}

TEST(AlignmentLoss, ScaleInvariant) {
  Matrix z = random_matrix(12, 4, 2);
  z.col(0).array() += 2.0;
  std::vector<int> flags{0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0};
  Matrix scaled = z;
  for (Eigen::Index i = 0; i < z.rows(); ++i) scaled.row(i) *= 0.5 + double(i);
  EXPECT_NEAR(patch_alignment_loss({z}, flags).value, patch_alignment_loss({scaled}, flags).value, 1e-12);
}

TEST(AlignmentLoss, Gradient) {
  // normals split between two opposite clusters, abnormal patches in between
  Matrix z = random_matrix(10, 4, 3, 0.1);
  std::vector<int> flags{0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (flags[std::size_t(i)]) {
      z(i, 1) += 1.0;
    } else {
      z(i, 0) += i % 2 == 0 ? 1.0 : -1.0;
      z(i, 1) += 0.2;
    }
  }
  const auto l = patch_alignment_loss({z}, flags);
  ASSERT_GT(l.value, 0.0);
  const Matrix num = numeric_gradient(z, [&] { return patch_alignment_loss({z}, flags).value; }, 1e-6);
  EXPECT_LT(relative_error(l.grads[0], num), 1e-6);
}

TEST(TotalLoss, Weights) {
  LossConfig c;
  EXPECT_NEAR(total_loss({0.5, 0.4, 0.2}, c), 1.1, 1e-15);
  c.lambda2 = 0.0;
  EXPECT_NEAR(total_loss({0.5, 0.4, 0.2}, c), 0.9, 1e-15);
}
