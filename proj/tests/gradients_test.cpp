#include <gtest/gtest.h>

#include <cmath>

#include "sgcam/errors.hpp"
#include "sgcam/gradients.hpp"
#include "sgcam/modelio.hpp"
#include "test_support.hpp"

namespace sgcam {
namespace {

using testing::max_abs_diff;
using testing::max_rel_error;
using testing::random_tensor;

constexpr ScoreMode kLogit0{ScoreKind::RawLogit, 0};

// conv -> flatten -> dense; purely linear after the conv layer.
Model linear_tail_model(const Tensor& dense_weights) {
  std::vector<LayerSpec> layers;
  layers.push_back(LayerSpec::conv("conv1", random_tensor({2, 1, 3, 3}, 31), random_tensor({2}, 32)));
  layers.push_back(LayerSpec::flatten("flatten"));
  layers.push_back(LayerSpec::dense("fc", dense_weights, Tensor({dense_weights.dim(0)}, 0.0)));
  return Model(std::move(layers), {1, 5, 5}, dense_weights.dim(0));
}

// Two conv stages so the reverse sweep from conv1 crosses a conv layer.
Model deep_model(std::uint64_t seed) {
  std::vector<LayerSpec> layers;
  layers.push_back(LayerSpec::conv("conv1", random_tensor({3, 2, 3, 3}, seed), random_tensor({3}, seed + 1, 0.0, 0.2), 1, 1));
  layers.push_back(LayerSpec::relu("relu1"));
  layers.push_back(LayerSpec::conv("conv2", random_tensor({4, 3, 3, 3}, seed + 2), random_tensor({4}, seed + 3), 2, 1));
  layers.push_back(LayerSpec::relu("relu2"));
  layers.push_back(LayerSpec::maxpool("pool", 2, 2));
  layers.push_back(LayerSpec::flatten("flatten"));
  layers.push_back(LayerSpec::dense("fc", random_tensor({3, 16}, seed + 4), random_tensor({3}, seed + 5)));
  layers.push_back(LayerSpec::softmax("softmax"));
  return Model(std::move(layers), {2, 7, 7}, 3);
}

TEST(GradWrtLayerTest, SumTailGivesOnes) {
  const Model model = linear_tail_model(Tensor({1, 2 * 3 * 3}, 1.0));
  const ActivationTrace trace = forward(model, random_tensor({1, 5, 5}, 1));
  EXPECT_EQ(grad_wrt_layer(model, trace, kLogit0, "conv1"), Tensor({2, 3, 3}, 1.0));
}

TEST(GradWrtLayerTest, ZeroTailGivesZeros) {
  const Model model = linear_tail_model(Tensor({2, 18}, 0.0));
  const ActivationTrace trace = forward(model, random_tensor({1, 5, 5}, 2));
  EXPECT_EQ(grad_wrt_layer(model, trace, kLogit0, "conv1"), Tensor({2, 3, 3}, 0.0));
  EXPECT_EQ(finite_diff_layer_grad(model, trace, kLogit0, "conv1"), Tensor({2, 3, 3}, 0.0));
}

TEST(GradWrtLayerTest, Errors) {
  const Model model = random_fixture(1);
  const ActivationTrace trace = forward(model, Tensor({1, 16, 16}, 0.5));
  EXPECT_THROW(grad_wrt_layer(model, trace, kLogit0, "nosuch"), UnknownLayer);
  EXPECT_THROW(grad_wrt_layer(model, trace, kLogit0, "relu1"), NonConvLayer);
  EXPECT_THROW(grad_wrt_layer(model, trace, {ScoreKind::RawLogit, 10}, "conv1"), ParamError);
}

TEST(GradWrtLayerTest, MatchesFiniteDifferencesOnFixture) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Model model = random_fixture(seed);
    const ActivationTrace trace = forward(model, random_tensor({1, 16, 16}, 40 + seed, 0.0, 1.0));
    for (std::size_t cls : {0u, 3u, 9u}) {
      for (ScoreKind kind : {ScoreKind::RawLogit, ScoreKind::ExpLogit, ScoreKind::Probability}) {
        const ScoreMode score{kind, cls};
        const Tensor g = grad_wrt_layer(model, trace, score, "conv1");
        EXPECT_LT(max_rel_error(g, finite_diff_layer_grad(model, trace, score, "conv1")), 1e-3);
      }
    }
  }
}

TEST(GradWrtLayerTest, MatchesFiniteDifferencesThroughConvTail) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Model model = deep_model(100 * seed);
    const ActivationTrace trace = forward(model, random_tensor({2, 7, 7}, 7 + seed));
    for (const char* layer : {"conv1", "conv2"}) {
      const ScoreMode score{ScoreKind::ExpLogit, seed % 3};
      const Tensor g = grad_wrt_layer(model, trace, score, layer);
      EXPECT_LT(max_rel_error(g, finite_diff_layer_grad(model, trace, score, layer)), 1e-3) << layer;
    }
  }
}

TEST(GradWrtLayerTest, LinearTailIsExact) {
  const Model model = linear_tail_model(random_tensor({3, 18}, 5));
  const ActivationTrace trace = forward(model, random_tensor({1, 5, 5}, 6));
  for (std::size_t cls = 0; cls < 3; ++cls) {
    const ScoreMode score{ScoreKind::RawLogit, cls};
    EXPECT_LT(max_abs_diff(grad_wrt_layer(model, trace, score, "conv1"),
                           finite_diff_layer_grad(model, trace, score, "conv1")),
              1e-9);
  }
}

TEST(GradWrtLayerTest, LinearInTailWeights) {
  const Tensor w1 = random_tensor({2, 18}, 7), w2 = random_tensor({2, 18}, 8);
  Tensor sum = w1;
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += 2.5 * w2[i];
  const Tensor input = random_tensor({1, 5, 5}, 9);
  const auto grad = [&](const Tensor& w) {
    const Model m = linear_tail_model(w);
    return grad_wrt_layer(m, forward(m, input), kLogit0, "conv1");
  };
  const Tensor g1 = grad(w1), g2 = grad(w2), gs = grad(sum);
  for (std::size_t i = 0; i < gs.size(); ++i) EXPECT_NEAR(gs[i], g1[i] + 2.5 * g2[i], 1e-12);
}

TEST(GradWrtLayerTest, FiniteDifferenceConvergesQuadratically) {
  // Softmax probability is smooth, so central differences have O(h^2) error.
  const Model model = random_fixture(11);
  const ActivationTrace trace = forward(model, random_tensor({1, 16, 16}, 12, 0.0, 1.0));
  const ScoreMode score{ScoreKind::Probability, 2};
  const Tensor g = grad_wrt_layer(model, trace, score, "conv1");
  const double coarse = max_abs_diff(g, finite_diff_layer_grad(model, trace, score, "conv1", 0.2));
  const double fine = max_abs_diff(g, finite_diff_layer_grad(model, trace, score, "conv1", 0.1));
  EXPECT_GT(coarse, 0.0);
  EXPECT_LT(fine, coarse);
  EXPECT_NEAR(coarse / fine, 4.0, 1.0);
}

TEST(GradWrtInputTest, DenseOnlyModelGivesWeightRow) {
  const Tensor w = random_tensor({3, 6}, 13);
  std::vector<LayerSpec> layers;
  layers.push_back(LayerSpec::flatten("flatten"));
  layers.push_back(LayerSpec::dense("fc", w, random_tensor({3}, 14)));
  const Model model(std::move(layers), {1, 2, 3}, 3);
  for (std::size_t cls = 0; cls < 3; ++cls) {
    const Tensor g = grad_wrt_input(model, random_tensor({1, 2, 3}, 15 + cls), {ScoreKind::RawLogit, cls});
    ASSERT_EQ(g.shape(), (Shape{1, 2, 3}));
    for (std::size_t n = 0; n < 6; ++n) EXPECT_EQ(g[n], w(cls, n));
  }
}

TEST(GradWrtInputTest, ZeroModelGivesZeroMap) {
  std::vector<LayerSpec> layers;
  layers.push_back(LayerSpec::conv("conv1", Tensor({2, 1, 3, 3}, 0.0), Tensor({2}, 0.0)));
  layers.push_back(LayerSpec::relu("relu1"));
  layers.push_back(LayerSpec::flatten("flatten"));
  layers.push_back(LayerSpec::dense("fc", Tensor({2, 18}, 0.0), Tensor({2}, 0.0)));
  const Model model(std::move(layers), {1, 5, 5}, 2);
  EXPECT_EQ(grad_wrt_input(model, random_tensor({1, 5, 5}, 3), kLogit0), Tensor({1, 5, 5}, 0.0));
}

TEST(GradWrtInputTest, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Model model = random_fixture(20 + seed);
    const ActivationTrace trace = forward(model, random_tensor({1, 16, 16}, 50 + seed, 0.0, 1.0));
    for (ScoreKind kind : {ScoreKind::RawLogit, ScoreKind::ExpLogit, ScoreKind::Probability}) {
      const ScoreMode score{kind, std::nullopt};
      EXPECT_LT(max_rel_error(grad_wrt_input(model, trace, score), finite_diff_input_grad(model, trace, score)), 1e-3);
    }
    const Model deep = deep_model(seed + 5);
    const ActivationTrace deep_trace = forward(deep, random_tensor({2, 7, 7}, seed));
    const ScoreMode score{ScoreKind::RawLogit, 1};
    EXPECT_LT(max_rel_error(grad_wrt_input(deep, deep_trace, score), finite_diff_input_grad(deep, deep_trace, score)),
              1e-3);
  }
}

TEST(HigherOrderTripleTest, ClosedFormValues) {
  const GradientTriple ones = higher_order_triple(Tensor({2, 2}, 1.0), 0.0, ScoreKind::ExpLogit);
  EXPECT_EQ(ones.d1, Tensor({2, 2}, 1.0));
  EXPECT_EQ(ones.d2, Tensor({2, 2}, 1.0));
  EXPECT_EQ(ones.d3, Tensor({2, 2}, 1.0));

  const GradientTriple zeros = higher_order_triple(Tensor({3}, 0.0), 1.3, ScoreKind::ExpLogit);
  EXPECT_EQ(zeros.d1, Tensor({3}, 0.0));
  EXPECT_EQ(zeros.d2, Tensor({3}, 0.0));
  EXPECT_EQ(zeros.d3, Tensor({3}, 0.0));

  const GradientTriple t = higher_order_triple(Tensor::vector({3.0, 0.0}), std::log(2.0), ScoreKind::ExpLogit);
  EXPECT_NEAR(t.d1[0], 6.0, 1e-12);
  EXPECT_NEAR(t.d2[0], 18.0, 1e-12);
  EXPECT_NEAR(t.d3[0], 54.0, 1e-12);

  const Tensor g = random_tensor({4}, 1);
  const GradientTriple raw = higher_order_triple(g, 5.0, ScoreKind::RawLogit);
  EXPECT_EQ(raw.d1, g);
  EXPECT_EQ(raw.d2, Tensor({4}, 0.0));
  EXPECT_EQ(raw.d3, Tensor({4}, 0.0));

  EXPECT_THROW(higher_order_triple(g, 0.0, ScoreKind::Probability), Unsupported);
}

TEST(HigherOrderTripleTest, AlgebraicConsistency) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor g = random_tensor({2, 3, 3}, 70 + seed, -2.0, 2.0);
    const double logit = -1.0 + 0.3 * static_cast<double>(seed);
    const GradientTriple t = higher_order_triple(g, logit, ScoreKind::ExpLogit);
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_NEAR(t.d2[i] * t.d1[i], t.d1[i] * t.d1[i] * g[i], 1e-10);
      EXPECT_NEAR(t.d3[i], t.d1[i] * g[i] * g[i], 1e-10);
    }
  }
}

TEST(DetectorFixtureTest, GradientIsUniformOverDetectorMap) {
  const Model model = detector_fixture();
  const ActivationTrace trace = forward(model, detector_image(4, 4));
  const Tensor g = grad_wrt_layer(model, trace, kLogit0, "conv1");
  const double expected = 1.0 / static_cast<double>(kDetectorSquare * kDetectorSquare);
  const std::size_t plane = kDetectorInputSize * kDetectorInputSize;
  for (std::size_t e = 0; e < plane; ++e) {
    EXPECT_DOUBLE_EQ(g[e], expected);
    EXPECT_EQ(g[plane + e], 0.0);
  }
}

}  // namespace
}  // namespace sgcam
