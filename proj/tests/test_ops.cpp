#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "op_check.hpp"

using namespace guidedepth;
using gdtest::check_gradients;
using gdtest::expect_within;
using gdtest::random_tensor;
using gdtest::weighted_sum;

namespace {

using Leaves32 = std::vector<Tensor<float>>;

Tensor<float> ones(Shape s) { return Tensor<float>::full(s, 1.0f); }

}  // namespace

// ---- conv2d -------------------------------------------------------------

TEST(Conv2d, BoxSumOfOnes) {
  Tape<float> tape(false);
  auto y = conv2d(tape, ones({1, 1, 3, 3}), ones({1, 1, 3, 3}), Tensor<float>::zeros({1, 1, 1, 1}),
                  1, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_EQ(y.at(0, 0, 1, 1), 9.0f);
  EXPECT_EQ(y.at(0, 0, 0, 0), 4.0f);
  EXPECT_EQ(y.at(0, 0, 2, 2), 4.0f);
  EXPECT_EQ(y.at(0, 0, 0, 1), 6.0f);
}

TEST(Conv2d, IdentityKernel) {
  Tape<float> tape(false);
  auto x = random_tensor<float>({2, 1, 5, 4}, 3);
  auto y = conv2d(tape, x, ones({1, 1, 1, 1}), Tensor<float>::zeros({1, 1, 1, 1}), 1, 0);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, OutputShapeFormula) {
  Tape<float> tape(false);
  for (int stride : {1, 2, 3}) {
    for (int pad : {0, 1, 2}) {
      auto x = random_tensor<float>({1, 2, 9, 7}, 1);
      auto w = random_tensor<float>({3, 2, 3, 3}, 2);
      auto y = conv2d(tape, x, w, Tensor<float>::zeros({3, 1, 1, 1}), stride, pad);
      EXPECT_EQ(y.shape().h, (9 + 2 * pad - 3) / stride + 1);
      EXPECT_EQ(y.shape().w, (7 + 2 * pad - 3) / stride + 1);
    }
  }
}

TEST(Conv2d, Errors) {
  Tape<float> tape(false);
  auto x = random_tensor<float>({1, 2, 4, 4}, 1);
  auto bias = Tensor<float>::zeros({1, 1, 1, 1});
  EXPECT_THROW(conv2d(tape, x, ones({1, 3, 3, 3}), bias, 1, 1), ShapeError);
  EXPECT_THROW(conv2d(tape, x, ones({1, 2, 7, 7}), bias, 1, 1), ShapeError);
  EXPECT_THROW(conv2d(tape, x, ones({1, 2, 3, 3}), bias, 0, 1), ShapeError);
  EXPECT_THROW(conv2d(tape, x, ones({1, 2, 3, 3}), bias, 1, -1), ShapeError);
}

TEST(Conv2d, LinearInInput) {
  Tape<float> tape(false);
  auto w = random_tensor<float>({4, 2, 3, 3}, 7);
  auto b = Tensor<float>::zeros({4, 1, 1, 1});
  auto x = random_tensor<float>({1, 2, 6, 6}, 8);
  auto y = random_tensor<float>({1, 2, 6, 6}, 9);
  const float alpha = 0.7f, beta = -1.3f;
  auto lhs = conv2d(tape, add(tape, scale(tape, x, alpha), scale(tape, y, beta)), w, b, 1, 1);
  auto rhs = add(tape, scale(tape, conv2d(tape, x, w, b, 1, 1), alpha),
                 scale(tape, conv2d(tape, y, w, b, 1, 1), beta));
  for (std::size_t i = 0; i < lhs.numel(); ++i) {
    EXPECT_NEAR(lhs.data()[i], rhs.data()[i], 1e-5);
  }
}

TEST(Conv2d, WeightGradientOfSumMatchesFiniteDifferences) {
  auto x = random_tensor<float>({1, 2, 5, 5}, 11);
  auto w = random_tensor<float>({4, 2, 3, 3}, 12);
  auto b = random_tensor<float>({4, 1, 1, 1}, 13);
  auto f = [](auto& tape, const auto& l) { return sum(tape, conv2d(tape, l[0], l[1], l[2], 1, 1)); };
  const auto r = check_gradients(f, Leaves32{x, w, b}, {"x", "weight", "bias"});
  EXPECT_LT(r.f64.max_error, 1e-3);
  EXPECT_LT(r.f32.max_error, 1e-3);
}

TEST(Conv2d, GradientsStridedPadded) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = random_tensor<float>({2, 3, 7, 6}, 20 + seed);
    auto w = random_tensor<float>({2, 3, 3, 3}, 30 + seed);
    auto b = random_tensor<float>({2, 1, 1, 1}, 40 + seed);
    auto f = [](auto& tape, const auto& l) {
      return weighted_sum(tape, conv2d(tape, l[0], l[1], l[2], 2, 1));
    };
    expect_within(check_gradients(f, Leaves32{x, w, b}, {"x", "weight", "bias"}));
  }
}

// ---- batch norm ---------------------------------------------------------

TEST(BatchNorm, ConstantChannelNormalisesToZero) {
  Tape<float> tape(false);
  auto stats = BatchNormStats<float>::fresh(1);
  auto y = batch_norm(tape, Tensor<float>::full({2, 1, 3, 3}, 4.0f), ones({1, 1, 1, 1}),
                      Tensor<float>::zeros({1, 1, 1, 1}), stats, NormMode::kTrain);
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(BatchNorm, ZeroGammaOutputsBetaAndBlocksInputGradient) {
  auto x = random_tensor<double>({2, 2, 3, 3}, 5);
  x.set_requires_grad(true);
  auto gamma = Tensor<double>::zeros({2, 1, 1, 1});
  auto beta = Tensor<double>::from_vector({2, 1, 1, 1}, {0.25, -1.5});
  auto stats = BatchNormStats<double>::fresh(2);
  Tape<double> tape;
  auto y = batch_norm(tape, x, gamma, beta, stats, NormMode::kTrain);
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 2; ++c) {
      for (int i = 0; i < 3; ++i) EXPECT_EQ(y.at(n, c, i, i), beta.data()[c]);
    }
  }
  tape.backward(gdtest::weighted_sum(tape, y));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(BatchNorm, TrainModeMomentsMatchAffineParameters) {
  Tape<double> tape(false);
  auto x = random_tensor<double>({3, 2, 4, 5}, 17, -3.0, 5.0);
  auto gamma = Tensor<double>::from_vector({2, 1, 1, 1}, {2.0, 0.5});
  auto beta = Tensor<double>::from_vector({2, 1, 1, 1}, {1.0, -0.25});
  auto stats = BatchNormStats<double>::fresh(2);
  auto y = batch_norm(tape, x, gamma, beta, stats, NormMode::kTrain);
  for (int c = 0; c < 2; ++c) {
    double s = 0, ss = 0;
    int count = 0;
    for (int n = 0; n < 3; ++n) {
      for (int h = 0; h < 4; ++h) {
        for (int w = 0; w < 5; ++w) {
          s += y.at(n, c, h, w);
          ++count;
        }
      }
    }
    const double m = s / count;
    for (int n = 0; n < 3; ++n) {
      for (int h = 0; h < 4; ++h) {
        for (int w = 0; w < 5; ++w) ss += (y.at(n, c, h, w) - m) * (y.at(n, c, h, w) - m);
      }
    }
    EXPECT_NEAR(m, beta.data()[c], 1e-12);
    // Biased variance of the output is gamma^2 * var / (var + eps).
    EXPECT_NEAR(ss / count, gamma.data()[c] * gamma.data()[c], 1e-4);
  }
}

TEST(BatchNorm, RunningStatisticsFollowMomentumUpdate) {
  Tape<double> tape(false);
  auto x = random_tensor<double>({2, 1, 3, 3}, 19, 0.0, 4.0);
  auto stats = BatchNormStats<double>::fresh(1);
  batch_norm(tape, x, Tensor<double>::full({1, 1, 1, 1}, 1.0), Tensor<double>::zeros({1, 1, 1, 1}),
             stats, NormMode::kTrain);
  double mean = 0;
  for (double v : x.data()) mean += v;
  mean /= 18.0;
  double var = 0;
  for (double v : x.data()) var += (v - mean) * (v - mean);
  var /= 17.0;  // unbiased
  EXPECT_TRUE(stats.initialized);
  EXPECT_NEAR(stats.mean.data()[0], 0.1 * mean, 1e-12);
  EXPECT_NEAR(stats.var.data()[0], 0.9 + 0.1 * var, 1e-12);
}

TEST(BatchNorm, EvalModeUsesRunningStatsAndLeavesThemUntouched) {
  auto stats = BatchNormStats<double>::fresh(1);
  Tape<double> tape(false);
  auto x = random_tensor<double>({1, 1, 2, 2}, 3);
  EXPECT_THROW(batch_norm(tape, x, Tensor<double>::full({1, 1, 1, 1}, 1.0),
                          Tensor<double>::zeros({1, 1, 1, 1}), stats, NormMode::kEval),
               std::logic_error);
  stats.mean = Tensor<double>::full({1, 1, 1, 1}, 2.0);
  stats.var = Tensor<double>::full({1, 1, 1, 1}, 4.0);
  stats.initialized = true;
  auto y = batch_norm(tape, x, Tensor<double>::full({1, 1, 1, 1}, 3.0),
                      Tensor<double>::full({1, 1, 1, 1}, 1.0), stats, NormMode::kEval);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(y.data()[i], 3.0 * (x.data()[i] - 2.0) / std::sqrt(4.0 + 1e-5) + 1.0, 1e-12);
  }
  EXPECT_EQ(stats.mean.data()[0], 2.0);
  EXPECT_EQ(stats.var.data()[0], 4.0);
}

TEST(BatchNorm, GradientsTrainAndEval) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = random_tensor<float>({2, 3, 4, 4}, 50 + seed);
    auto gamma = random_tensor<float>({3, 1, 1, 1}, 60 + seed, 0.5, 1.5);
    auto beta = random_tensor<float>({3, 1, 1, 1}, 70 + seed);
    auto train = [](auto& tape, const auto& l) {
      using T = typename std::decay_t<decltype(l[0])>::value_type;
      auto st = BatchNormStats<T>::fresh(3);
      return weighted_sum(tape, batch_norm(tape, l[0], l[1], l[2], st, NormMode::kTrain));
    };
    expect_within(check_gradients(train, Leaves32{x, gamma, beta}, {"x", "gamma", "beta"}), 1e-3);
    auto eval = [](auto& tape, const auto& l) {
      using T = typename std::decay_t<decltype(l[0])>::value_type;
      auto st = BatchNormStats<T>::fresh(3);
      st.mean = Tensor<T>::full({3, 1, 1, 1}, T(0.2));
      st.var = Tensor<T>::full({3, 1, 1, 1}, T(0.7));
      st.initialized = true;
      return weighted_sum(tape, batch_norm(tape, l[0], l[1], l[2], st, NormMode::kEval));
    };
    expect_within(check_gradients(eval, Leaves32{x, gamma, beta}, {"x", "gamma", "beta"}), 1e-3);
  }
}

// ---- elementwise ----------------------------------------------------------

TEST(Elementwise, ReluAndSigmoidValues) {
  Tape<float> tape(false);
  auto r = relu(tape, Tensor<float>::from_vector({1, 1, 1, 3}, {-1.0f, 0.0f, 2.0f}));
  EXPECT_EQ(r.data()[0], 0.0f);
  EXPECT_EQ(r.data()[1], 0.0f);
  EXPECT_EQ(r.data()[2], 2.0f);
  EXPECT_EQ(sigmoid(tape, Tensor<float>::scalar(0.0f)).item(), 0.5f);
}

TEST(Elementwise, ReluSubgradientAtZeroIsZero) {
  auto x = Tensor<double>::zeros({1, 1, 1, 2});
  x.set_requires_grad(true);
  Tape<double> tape;
  tape.backward(sum(tape, relu(tape, x)));
  EXPECT_EQ(x.grad()[0], 0.0);
  auto y = Tensor<double>::zeros({1, 1, 1, 2});
  y.set_requires_grad(true);
  Tape<double> tape2;
  tape2.backward(sum(tape2, guidedepth::abs(tape2, y)));
  EXPECT_EQ(y.grad()[0], 0.0);
}

TEST(Elementwise, AddZerosAndScaleByZero) {
  Tape<float> tape(false);
  auto x = random_tensor<float>({1, 2, 3, 3}, 4);
  auto a = add(tape, x, Tensor<float>::zeros(x.shape()));
  auto s = scale(tape, x, 0.0f);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(a.data()[i], x.data()[i]);
    EXPECT_EQ(s.data()[i], 0.0f);
  }
  EXPECT_THROW(add(tape, x, Tensor<float>::zeros({1, 2, 3, 2})), ShapeError);
}

TEST(Elementwise, Gradients) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto a = random_tensor<float>({2, 2, 3, 3}, 100 + seed);
    auto b = random_tensor<float>({2, 2, 3, 3}, 200 + seed, 0.5, 2.0);
    auto f = [](auto& tape, const auto& l) {
      using T = typename std::decay_t<decltype(l[0])>::value_type;
      auto t = add(tape, relu(tape, l[0]), sigmoid(tape, l[1]));
      t = add(tape, t, mul(tape, l[0], l[1]));
      t = add(tape, t, div(tape, l[0], l[1]));
      t = add(tape, t, sub(tape, square(tape, l[0]), guidedepth::abs(tape, l[1])));
      t = add_scalar(tape, scale(tape, t, T(0.75)), T(2));
      return add(tape, weighted_sum(tape, t), mean(tape, l[0]));
    };
    expect_within(check_gradients(f, Leaves32{a, b}, {"a", "b"}), 1e-3);
  }
}

// ---- bilinear resize ------------------------------------------------------

TEST(Bilinear, ConstantStaysConstant) {
  Tape<float> tape(false);
  for (auto [h, w] : {std::pair{1, 1}, {3, 7}, {16, 2}}) {
    auto y = bilinear_resize(tape, Tensor<float>::full({1, 2, 5, 6}, 3.5f), h, w);
    for (float v : y.data()) EXPECT_EQ(v, 3.5f);
  }
}

TEST(Bilinear, TwoByTwoToFourByFourKeepsCorners) {
  Tape<double> tape(false);
  auto y = bilinear_resize(tape, Tensor<double>::from_vector({1, 1, 2, 2}, {0, 1, 2, 3}), 4, 4);
  EXPECT_EQ(y.at(0, 0, 0, 0), 0.0);
  EXPECT_EQ(y.at(0, 0, 0, 3), 1.0);
  EXPECT_EQ(y.at(0, 0, 3, 0), 2.0);
  EXPECT_EQ(y.at(0, 0, 3, 3), 3.0);
  // Source coordinate of dst 1 is (1 + 0.5) * 0.5 - 0.5 = 0.25.
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 1), 0.25);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 0.25 * 2 + 0.25);
}

TEST(Bilinear, RampIsAFixedPointAwayFromBorders) {
  Tape<double> tape(false);
  const int h = 12, w = 16;
  std::vector<double> v(h * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) v[r * w + c] = 0.5 * c - 0.25 * r + 1.0;
  }
  auto x = Tensor<double>::from_vector({1, 1, h, w}, v);
  auto y = bilinear_resize(tape, bilinear_resize(tape, x, h / 2, w / 2), h, w);
  for (int r = 1; r < h - 1; ++r) {
    for (int c = 1; c < w - 1; ++c) EXPECT_NEAR(y.at(0, 0, r, c), x.at(0, 0, r, c), 1e-6);
  }
}

TEST(Bilinear, PreservesGlobalBounds) {
  Tape<float> tape(false);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x = random_tensor<float>({1, 2, 5, 7}, seed, -3.0, 2.0);
    const auto [lo, hi] = std::minmax_element(x.data().begin(), x.data().end());
    for (auto [h, w] : {std::pair{2, 3}, {11, 13}, {5, 7}, {1, 20}}) {
      auto y = bilinear_resize(tape, x, h, w);
      for (float v : y.data()) {
        EXPECT_GE(v, *lo);
        EXPECT_LE(v, *hi);
      }
    }
  }
}

TEST(Bilinear, Gradients) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = random_tensor<float>({2, 2, 5, 6}, 300 + seed);
    for (auto [h, w] : {std::pair{10, 12}, {3, 4}, {7, 5}}) {
      auto f = [h = h, w = w](auto& tape, const auto& l) {
        return weighted_sum(tape, bilinear_resize(tape, l[0], h, w));
      };
      expect_within(check_gradients(f, Leaves32{x}, {"x"}), 1e-3);
    }
  }
}

// ---- concat / pool / dense / gate -----------------------------------------

TEST(Concat, ShapesAndEmptyOperand) {
  Tape<float> tape(false);
  auto a = random_tensor<float>({1, 2, 4, 4}, 1);
  auto b = random_tensor<float>({1, 3, 4, 4}, 2);
  EXPECT_EQ(concat_channels(tape, a, b).shape(), (Shape{1, 5, 4, 4}));
  auto e = concat_channels(tape, a, Tensor<float>::zeros({1, 0, 4, 4}));
  EXPECT_EQ(e.shape(), a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(e.data()[i], a.data()[i]);
  EXPECT_THROW(concat_channels(tape, a, Tensor<float>::zeros({1, 1, 4, 3})), ShapeError);
}

TEST(Concat, SumGradientSplitsIntoOnes) {
  auto a = random_tensor<float>({1, 2, 2, 2}, 1);
  auto b = random_tensor<float>({1, 1, 2, 2}, 2);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tape<float> tape;
  tape.backward(sum(tape, concat_channels(tape, a, b)));
  for (float g : a.grad()) EXPECT_EQ(g, 1.0f);
  for (float g : b.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(PoolDense, ConstantPoolAndIdentityDense) {
  Tape<float> tape(false);
  auto p = global_avg_pool(tape, Tensor<float>::full({2, 3, 4, 5}, 1.75f));
  EXPECT_EQ(p.shape(), (Shape{2, 3, 1, 1}));
  for (float v : p.data()) EXPECT_FLOAT_EQ(v, 1.75f);
  auto x = random_tensor<float>({2, 3, 1, 1}, 5);
  std::vector<float> eye(9, 0.0f);
  for (int i = 0; i < 3; ++i) eye[i * 4] = 1.0f;
  auto y = dense(tape, x, Tensor<float>::from_vector({3, 3, 1, 1}, eye),
                 Tensor<float>::zeros({3, 1, 1, 1}));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
  EXPECT_THROW(dense(tape, x, Tensor<float>::zeros({3, 2, 1, 1}), Tensor<float>::zeros({3, 1, 1, 1})),
               ShapeError);
}

TEST(PoolDense, Gradients) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = random_tensor<float>({2, 4, 3, 5}, 400 + seed);
    auto w = random_tensor<float>({3, 4, 1, 1}, 410 + seed);
    auto b = random_tensor<float>({3, 1, 1, 1}, 420 + seed);
    auto g = random_tensor<float>({2, 4, 1, 1}, 430 + seed);
    auto f = [](auto& tape, const auto& l) {
      auto pooled = global_avg_pool(tape, l[0]);
      auto gated = channel_mul(tape, l[0], sigmoid(tape, l[3]));
      return add(tape, weighted_sum(tape, dense(tape, pooled, l[1], l[2])),
                 weighted_sum(tape, gated));
    };
    expect_within(check_gradients(f, Leaves32{x, w, b, g}, {"x", "weight", "bias", "gate"}), 1e-3);
  }
}

// ---- smoothing and differences -------------------------------------------

TEST(GaussianBlur, ConstantPlaneUnchangedAndGradients) {
  Tape<double> tape(false);
  auto c = gaussian_blur(tape, Tensor<double>::full({1, 1, 6, 7}, 2.0), 5, 1.0);
  for (double v : c.data()) EXPECT_NEAR(v, 2.0, 1e-14);
  EXPECT_THROW(gaussian_blur(tape, c, 4, 1.0), std::invalid_argument);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = random_tensor<float>({1, 2, 6, 7}, 500 + seed);
    auto f = [](auto& tape, const auto& l) { return weighted_sum(tape, gaussian_blur(tape, l[0], 5, 1.0)); };
    expect_within(check_gradients(f, Leaves32{x}, {"x"}), 1e-3);
  }
}

TEST(Differences, ShapesValuesAndGradients) {
  Tape<double> tape(false);
  auto x = Tensor<double>::from_vector({1, 1, 2, 3}, {1, 4, 9, 2, 2, 5});
  auto dx = diff_x(tape, x);
  auto dy = diff_y(tape, x);
  EXPECT_EQ(dx.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(dy.shape(), (Shape{1, 1, 1, 3}));
  EXPECT_EQ(dx.at(0, 0, 0, 1), 5.0);
  EXPECT_EQ(dy.at(0, 0, 0, 2), -4.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto t = random_tensor<float>({2, 1, 4, 5}, 600 + seed);
    auto f = [](auto& tape, const auto& l) {
      return add(tape, weighted_sum(tape, diff_x(tape, l[0])), weighted_sum(tape, diff_y(tape, l[0])));
    };
    expect_within(check_gradients(f, Leaves32{t}, {"x"}), 1e-3);
  }
}

// ---- determinism -----------------------------------------------------------

TEST(Determinism, ForwardOpsAreBitwiseRepeatable) {
  auto run = [] {
    Tape<float> tape(false);
    auto x = random_tensor<float>({2, 3, 8, 8}, 77);
    auto w = random_tensor<float>({5, 3, 3, 3}, 78);
    auto stats = BatchNormStats<float>::fresh(5);
    auto y = conv2d(tape, x, w, Tensor<float>::zeros({5, 1, 1, 1}), 1, 1);
    y = batch_norm(tape, y, ones({5, 1, 1, 1}), Tensor<float>::zeros({5, 1, 1, 1}), stats,
                   NormMode::kTrain);
    y = bilinear_resize(tape, relu(tape, y), 16, 16);
    return gaussian_blur(tape, y, 11, 1.5);
  };
  auto a = run(), b = run();
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}
