#include <gtest/gtest.h>

#include <numeric>

#include "test_support.hpp"

using namespace afclip;
using afclip::testing::numeric_gradient;
using afclip::testing::random_matrix;
using afclip::testing::relative_error;

TEST(Adapter, ParameterCounts) {
  EXPECT_EQ(init_adapter(1024, 512, 1).parameter_count(), 2097152u);
  EXPECT_EQ(init_adapter(32, 16, 1).parameter_count(), 2048u);
}

TEST(Adapter, InitIsSeeded) {
  const auto a = init_adapter(32, 16, 7);
  const auto b = init_adapter(32, 16, 7);
  const auto c = init_adapter(32, 16, 8);
  EXPECT_TRUE(a.wq == b.wq && a.wk == b.wk && a.wv == b.wv && a.wo == b.wo);
  EXPECT_FALSE(a.wq == c.wq);
}

TEST(Adapter, InitScale) {
  const auto p = init_adapter(256, 128, 3);
  const double in_var = p.wq.squaredNorm() / static_cast<double>(p.wq.size());
  const double out_var = p.wo.squaredNorm() / static_cast<double>(p.wo.size());
  EXPECT_NEAR(in_var, 1.0 / 256, 0.1 / 256);
  EXPECT_NEAR(out_var, 1.0 / 128, 0.1 / 128);
}

TEST(Adapter, ShapePreserved) {
  const auto p = init_adapter(32, 16, 1);
  const Matrix out = adapt(random_matrix(65, 32, 2), p);
  EXPECT_EQ(out.rows(), 65);
  EXPECT_EQ(out.cols(), 32);
}

TEST(Adapter, LargeShapePreserved) {
  const auto p = init_adapter(1024, 512, 1);
  const Matrix out = adapt(random_matrix(1370, 1024, 2, 0.1), p);
  EXPECT_EQ(out.rows(), 1370);
  EXPECT_EQ(out.cols(), 1024);
}

TEST(Adapter, ZeroMapsToZero) {
  for (int heads : {1, 4}) {
    const auto p = init_adapter(32, 16, 1, heads);
    EXPECT_TRUE(adapt(Matrix::Zero(65, 32), p).isZero(0.0));
  }
}

TEST(Adapter, WidthMismatchRejected) {
  const auto p = init_adapter(32, 16, 1);
  EXPECT_THROW(adapt(Matrix::Zero(5, 31), p), ConfigError);
}

TEST(Adapter, HeadsMustDivideInnerWidth) { EXPECT_THROW(init_adapter(32, 16, 1, 3), ConfigError); }

TEST(Adapter, PermutationEquivariant) {
  for (int heads : {1, 2}) {
    const auto p = init_adapter(12, 6, 5, heads);
    const Matrix x = random_matrix(10, 12, 6);
    std::vector<int> perm(9);
    std::iota(perm.begin(), perm.end(), 1);
    std::mt19937_64 rng(11);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix xp = x;
    for (int i = 0; i < 9; ++i) xp.row(i + 1) = x.row(perm[static_cast<std::size_t>(i)]);
    const Matrix y = adapt(x, p);
    const Matrix yp = adapt(xp, p);
    EXPECT_LT((yp.row(0) - y.row(0)).cwiseAbs().maxCoeff(), 1e-6);
    for (int i = 0; i < 9; ++i)
      EXPECT_LT((yp.row(i + 1) - y.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Adapter, AttentionRowsSumToOne) {
  for (int heads : {1, 4}) {
    const auto p = init_adapter(32, 16, 2, heads);
    AdapterTrace trace;
    adapt(random_matrix(65, 32, 3, 3.0), p, &trace);
    ASSERT_EQ(trace.attention.size(), static_cast<std::size_t>(heads));
    for (const auto& a : trace.attention) {
      EXPECT_LT((a.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-6);
      EXPECT_GE(a.minCoeff(), 0.0);
    }
  }
}

TEST(Adapter, LargeLogitsStayFinite) {
  const auto p = init_adapter(8, 4, 2);
  EXPECT_TRUE(adapt(random_matrix(6, 8, 3, 1e3), p).allFinite());
}

TEST(Adapter, GradientsMatchFiniteDifferences) {
  for (int heads : {1, 2}) {
    auto p = init_adapter(8, 4, 21, heads);
    Matrix x = random_matrix(6, 8, 22);
    const Matrix w = random_matrix(6, 8, 23);
    const auto loss = [&] { return adapt(x, p).cwiseProduct(w).sum(); };

    AdapterTrace trace;
    adapt(x, p, &trace);
    auto grads = AdapterGrads::zeros_like(p);
    const Matrix gx = adapt_backward(trace, p, w, grads);

    EXPECT_LT(relative_error(gx, numeric_gradient(x, loss)), 1e-4);
    EXPECT_LT(relative_error(grads.wq, numeric_gradient(p.wq, loss)), 1e-4);
    EXPECT_LT(relative_error(grads.wk, numeric_gradient(p.wk, loss)), 1e-4);
    EXPECT_LT(relative_error(grads.wv, numeric_gradient(p.wv, loss)), 1e-4);
    EXPECT_LT(relative_error(grads.wo, numeric_gradient(p.wo, loss)), 1e-4);
  }
}

TEST(Adapter, BackwardAccumulates) {
  const auto p = init_adapter(8, 4, 1);
  const Matrix x = random_matrix(6, 8, 2);
  const Matrix g = random_matrix(6, 8, 3);
  AdapterTrace trace;
  adapt(x, p, &trace);
  auto once = AdapterGrads::zeros_like(p);
  adapt_backward(trace, p, g, once);
  auto twice = AdapterGrads::zeros_like(p);
  adapt_backward(trace, p, g, twice);
  adapt_backward(trace, p, g, twice);
  EXPECT_LT((twice.wq - 2.0 * once.wq).norm(), 1e-12);
  EXPECT_LT((twice.wo - 2.0 * once.wo).norm(), 1e-12);
}
