#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sgcam/errors.hpp"
#include "sgcam/random.hpp"
#include "sgcam/tensor.hpp"
#include "test_support.hpp"

namespace sgcam {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;

TEST(TensorTest, ConstructorRejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW(t.reshaped({4}), ShapeError);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
}

TEST(Conv2dTest, IdentityKernel) {
  const Tensor input = random_tensor({1, 5, 4}, 1);
  const Tensor out = conv2d(input, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}, 0.0), 1, 0);
  EXPECT_EQ(out, input);
}

TEST(Conv2dTest, ZeroInputGivesBias) {
  const Tensor kernels = random_tensor({3, 2, 3, 3}, 2);
  const Tensor bias = Tensor::vector({0.5, -1.0, 2.0});
  const Tensor out = conv2d(Tensor({2, 6, 6}, 0.0), kernels, bias, 1, 1);
  ASSERT_EQ(out.shape(), (Shape{3, 6, 6}));
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t e = 0; e < 36; ++e) EXPECT_EQ(out[k * 36 + e], bias[k]);
  }
}

TEST(Conv2dTest, MatchesNaiveLoops) {
  const Tensor input = random_tensor({1, 8, 8}, 3);
  const Tensor kernels = random_tensor({2, 1, 3, 3}, 4);
  const Tensor bias = random_tensor({2}, 5);
  const Tensor out = conv2d(input, kernels, bias, 1, 0);
  ASSERT_EQ(out.shape(), (Shape{2, 6, 6}));
  EXPECT_LT(max_abs_diff(out, testing::naive_conv(input, kernels, bias, 1, 0)), 1e-12);
}

TEST(Conv2dTest, MatchesNaiveLoopsStridedAndPadded) {
  const Tensor input = random_tensor({3, 9, 9}, 6);
  const Tensor kernels = random_tensor({4, 3, 3, 3}, 7);
  const Tensor bias = random_tensor({4}, 8);
  const Tensor out = conv2d(input, kernels, bias, 2, 1);
  ASSERT_EQ(out.shape(), (Shape{4, 5, 5}));
  EXPECT_LT(max_abs_diff(out, testing::naive_conv(input, kernels, bias, 2, 1)), 1e-12);
}

TEST(Conv2dTest, ShapeErrors) {
  const Tensor bias({1}, 0.0);
  EXPECT_THROW(conv2d(Tensor({2, 4, 4}), Tensor({1, 1, 3, 3}), bias, 1, 0), ShapeError);
  EXPECT_THROW(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), bias, 1, 0), ShapeError);
  // (6 - 3) / 2 is not integral.
  EXPECT_THROW(conv2d(Tensor({1, 6, 6}), Tensor({1, 1, 3, 3}), bias, 2, 0), ShapeError);
}

TEST(Conv2dTest, IsLinearWithoutBias) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor x = random_tensor({2, 7, 7}, 100 + seed);
    const Tensor y = random_tensor({2, 7, 7}, 200 + seed);
    const Tensor k = random_tensor({3, 2, 3, 3}, 300 + seed);
    const Tensor zero({3}, 0.0);
    const double a = 1.7, b = -0.4;
    Tensor mix = x;
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    const Tensor lhs = conv2d(mix, k, zero, 1, 1);
    const Tensor cx = conv2d(x, k, zero, 1, 1), cy = conv2d(y, k, zero, 1, 1);
    Tensor rhs = cx;
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = a * cx[i] + b * cy[i];
    EXPECT_LT(max_abs_diff(lhs, rhs), 1e-10);
  }
}

TEST(ReluTest, Basics) {
  EXPECT_EQ(relu(Tensor({3, 2}, -2.0)), Tensor({3, 2}, 0.0));
  const Tensor pos = random_tensor({4, 4}, 9, 0.1, 2.0);
  EXPECT_EQ(relu(pos), pos);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor t = random_tensor({5, 5}, seed);
    const Tensor r = relu(t);
    EXPECT_EQ(relu(r), r);
    for (std::size_t i = 0; i < t.size(); ++i) {
      EXPECT_GE(r[i], 0.0);
      EXPECT_LE(r[i], std::abs(t[i]));
    }
  }
}

TEST(MaxPoolTest, ConstantInput) {
  const auto pooled = maxpool2d(Tensor({2, 6, 6}, 3.25), 2, 2);
  EXPECT_EQ(pooled.output, Tensor({2, 3, 3}, 3.25));
  // Ties resolve to the first element of each window.
  EXPECT_EQ(pooled.argmax[0], 0u);
  EXPECT_EQ(pooled.argmax[1], 2u);
  EXPECT_EQ(pooled.argmax[3], 12u);
}

TEST(MaxPoolTest, IncreasingLayoutPicksBottomRight) {
  Tensor t({1, 4, 4});
  std::iota(t.data().begin(), t.data().end(), 0.0);
  const auto pooled = maxpool2d(t, 2, 2);
  EXPECT_EQ(pooled.output, Tensor({1, 2, 2}, {5.0, 7.0, 13.0, 15.0}));
  EXPECT_EQ(pooled.argmax, (std::vector<std::size_t>{5, 7, 13, 15}));
}

TEST(MaxPoolTest, MatchesBruteForceWindows) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor t = random_tensor({1, 6, 6}, 40 + seed);
    EXPECT_EQ(maxpool2d(t, 2, 2).output, testing::brute_force_pool(t, 2, 2));
    EXPECT_EQ(maxpool2d(t, 3, 1).output, testing::brute_force_pool(t, 3, 1));
  }
  EXPECT_THROW(maxpool2d(Tensor({1, 1, 4}), 2, 2), ShapeError);
}

TEST(DenseTest, IdentityAndBias) {
  const Tensor x = Tensor::vector({1.0, -2.0, 3.0});
  Tensor eye({3, 3}, 0.0);
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  EXPECT_EQ(dense(x, eye, Tensor({3}, 0.0)), x);
  const Tensor b = Tensor::vector({0.5, 0.25});
  EXPECT_EQ(dense(x, Tensor({2, 3}, 0.0), b), b);
  EXPECT_THROW(dense(x, Tensor({2, 4}), b), ShapeError);
}

TEST(DenseTest, MatchesDotProducts) {
  const Tensor x = random_tensor({4}, 11);
  const Tensor w = random_tensor({3, 4}, 12);
  const Tensor b = random_tensor({3}, 13);
  const Tensor y = dense(x, w, b);
  for (std::size_t m = 0; m < 3; ++m) {
    double expected = b[m];
    for (std::size_t n = 0; n < 4; ++n) expected += w[m * 4 + n] * x[n];
    EXPECT_NEAR(y[m], expected, 1e-12);
  }
}

TEST(SoftmaxTest, KnownValues) {
  const Tensor half = softmax(Tensor::vector({0.0, 0.0}));
  EXPECT_DOUBLE_EQ(half[0], 0.5);
  EXPECT_DOUBLE_EQ(half[1], 0.5);
  const Tensor p = softmax(Tensor::vector({std::log(1.0), std::log(2.0), std::log(3.0)}));
  EXPECT_NEAR(p[0], 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(p[1], 2.0 / 6.0, 1e-12);
  EXPECT_NEAR(p[2], 3.0 / 6.0, 1e-12);
}

TEST(SoftmaxTest, ShiftInvariantAndNormalised) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor v = random_tensor({7}, 60 + seed, -5.0, 5.0);
    Tensor shifted = v;
    for (double& x : shifted.data()) x += 123.0;
    const Tensor p = softmax(v);
    EXPECT_LT(max_abs_diff(p, softmax(shifted)), 1e-12);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    for (double x : p.data()) EXPECT_GT(x, 0.0);
  }
  // Large logits must not overflow.
  const Tensor big = softmax(Tensor::vector({1000.0, 1000.0}));
  EXPECT_DOUBLE_EQ(big[0], 0.5);
}

TEST(NoiseTest, ZeroSigmaIsIdentity) {
  const Tensor t = random_tensor({3, 4, 4}, 14);
  GaussianRng rng(1);
  EXPECT_EQ(add_gaussian_noise(t, 0.0, rng), t);
  EXPECT_THROW(add_gaussian_noise(t, -0.1, rng), ParamError);
}

TEST(NoiseTest, SameSeedSameNoise) {
  const Tensor t({100}, 0.0);
  GaussianRng a(42), b(42), c(43);
  const Tensor na = add_gaussian_noise(t, 1.0, a);
  EXPECT_EQ(na, add_gaussian_noise(t, 1.0, b));
  EXPECT_NE(na, add_gaussian_noise(t, 1.0, c));
}

TEST(NoiseTest, StatisticalBounds) {
  const std::size_t n = 100000;
  const Tensor t({n}, 0.0);
  GaussianRng rng(2024);
  const Tensor noisy = add_gaussian_noise(t, 0.1, rng);
  double mean = 0.0;
  for (double v : noisy.data()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : noisy.data()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (n - 1));
  EXPECT_LT(std::abs(mean), 3.0 * 0.1 / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(sd, 0.1, 0.005);
}

TEST(RandomTest, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
  GaussianRng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(BilinearTest, ConstantAndIdentity) {
  const Tensor one({1, 1}, 0.75);
  EXPECT_EQ(bilinear_resize(one, 5, 3), Tensor({5, 3}, 0.75));
  const Tensor m = random_tensor({4, 6}, 15);
  EXPECT_EQ(bilinear_resize(m, 4, 6), m);
  EXPECT_THROW(bilinear_resize(m, 0, 3), ShapeError);
}

TEST(BilinearTest, TwoByTwoUpsample) {
  const Tensor m({2, 2}, {0.0, 1.0, 1.0, 0.0});
  const Tensor out = bilinear_resize(m, 4, 4);
  EXPECT_LT(max_abs_diff(out, testing::bilinear_oracle(m, 4, 4)), 1e-12);
  // Source coordinates are {0, 0.25, 0.75, 1} on both axes; f(y,x) = x + y - 2xy.
  const Tensor expected({4, 4}, {0.0,  0.25,  0.75,  1.0,   //
                                 0.25, 0.375, 0.625, 0.75,  //
                                 0.75, 0.625, 0.375, 0.25,  //
                                 1.0,  0.75,  0.25,  0.0});
  EXPECT_LT(max_abs_diff(out, expected), 1e-12);
}

TEST(BilinearTest, StaysWithinSourceRange) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor m = random_tensor({3 + seed % 4, 2 + seed % 5}, 500 + seed, -3.0, 7.0);
    const Tensor out = bilinear_resize(m, 11 + seed, 7 + 2 * seed);
    EXPECT_LT(max_abs_diff(out, testing::bilinear_oracle(m, 11 + seed, 7 + 2 * seed)), 1e-12);
    EXPECT_GE(out.min(), m.min());
    EXPECT_LE(out.max(), m.max());
  }
}

}  // namespace
}  // namespace sgcam
