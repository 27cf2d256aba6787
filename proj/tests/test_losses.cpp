#include <gtest/gtest.h>

#include <cmath>

#include "guidedepth/blocks.hpp"
#include "guidedepth/losses.hpp"
#include "model_check.hpp"
#include "op_check.hpp"

using namespace guidedepth;
using gdtest::check_gradients;
using gdtest::expect_within;
using gdtest::random_tensor;

namespace {

using Leaves32 = std::vector<Tensor<float>>;

// Independent SSIM: per pixel, a Gaussian window clipped to the image and
// renormalised, with plain loops and 64-bit sums.
double naive_ssim(const Tensor<double>& a, const Tensor<double>& b, const LossConfig& cfg) {
  const Shape s = a.shape();
  const int r = cfg.ssim_window / 2;
  double total = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int i = 0; i < s.h; ++i) {
        for (int j = 0; j < s.w; ++j) {
          double wsum = 0, ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
          for (int di = -r; di <= r; ++di) {
            for (int dj = -r; dj <= r; ++dj) {
              const int y = i + di, x = j + dj;
              if (y < 0 || y >= s.h || x < 0 || x >= s.w) continue;
              const double w =
                  std::exp(-(di * di + dj * dj) / (2 * cfg.ssim_sigma * cfg.ssim_sigma));
              const double va = a.at(n, c, y, x), vb = b.at(n, c, y, x);
              wsum += w;
              ma += w * va;
              mb += w * vb;
              saa += w * va * va;
              sbb += w * vb * vb;
              sab += w * va * vb;
            }
          }
          ma /= wsum;
          mb /= wsum;
          const double va = saa / wsum - ma * ma, vb = sbb / wsum - mb * mb;
          const double cov = sab / wsum - ma * mb;
          total += (2 * ma * mb + cfg.c1) * (2 * cov + cfg.c2) /
                   ((ma * ma + mb * mb + cfg.c1) * (va + vb + cfg.c2));
        }
      }
    }
  }
  return total / s.numel();
}

template <typename T>
T value(const Tensor<T>& t) {
  return t.item();
}

Tensor<double> checkerboard(int h, int w, double lo, double hi) {
  std::vector<double> v(h * w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) v[i * w + j] = (i + j) % 2 ? hi : lo;
  }
  return Tensor<double>::from_vector({1, 1, h, w}, v);
}

}  // namespace

// ---- configuration ------------------------------------------------------------

TEST(LossConfig, CanonicalConstantsFollowDynamicRange) {
  const auto c = LossConfig::for_dynamic_range(5.0);
  EXPECT_DOUBLE_EQ(c.c1, 0.05 * 0.05);
  EXPECT_DOUBLE_EQ(c.c2, 0.15 * 0.15);
  EXPECT_EQ(c.lambda_l1, 0.1);
  EXPECT_EQ(c.ssim_window, 11);
  EXPECT_EQ(c.ssim_sigma, 1.5);
}

TEST(LossConfig, InvalidValuesAreRejected) {
  auto bad = LossConfig::for_dynamic_range(1.0);
  bad.ssim_window = 10;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = LossConfig::for_dynamic_range(1.0);
  bad.lambda_l1 = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = LossConfig::for_dynamic_range(1.0);
  bad.c2 = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  Tape<float> tape(false);
  auto y = random_tensor<float>({1, 1, 4, 4}, 1, 0, 1);
  bad.c2 = 1e-4;
  bad.ssim_window = 4;
  EXPECT_THROW(combined_loss(tape, y, y, bad), std::invalid_argument);
}

// ---- SSIM -------------------------------------------------------------------------

TEST(SSIM, IdenticalImagesGiveExactlyOne) {
  const auto cfg = LossConfig::for_dynamic_range(1.0);
  Tape<float> tape(false);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = random_tensor<float>({2, 1, 12, 16}, seed, 0, 1);
    EXPECT_EQ(value(ssim(tape, x, x, cfg)), 1.0f);
  }
}

TEST(SSIM, ConstantPatchesMatchClosedForm) {
  for (double range : {1.0, 5.0}) {
    const auto cfg = LossConfig::for_dynamic_range(range);
    for (auto [k1, k2] : {std::pair{0.3, 0.7}, {0.0, 0.5}, {0.9, 0.1}, {0.25, 0.25}}) {
      k1 *= range;
      k2 *= range;
      const double expected = (2 * k1 * k2 + cfg.c1) / (k1 * k1 + k2 * k2 + cfg.c1);
      Tape<double> tape(false);
      auto a = Tensor<double>::full({1, 1, 2, 2}, k1);
      auto b = Tensor<double>::full({1, 1, 2, 2}, k2);
      EXPECT_NEAR(value(ssim(tape, a, b, cfg)), expected, 1e-6);
      // 32-bit: cancellation in E[x^2] - E[x]^2 is compared against C2.
      Tape<float> t32(false);
      EXPECT_NEAR(value(ssim(t32, a.cast<float>(), b.cast<float>(), cfg)), expected, 1e-4);
    }
  }
}

TEST(SSIM, MatchesIndependentWindowedOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cfg = LossConfig::for_dynamic_range(5.0);
    auto a = random_tensor<double>({2, 1, 9, 13}, seed, 0, 5);
    auto b = random_tensor<double>({2, 1, 9, 13}, seed + 50, 0, 5);
    Tape<double> tape(false);
    EXPECT_NEAR(value(ssim(tape, a, b, cfg)), naive_ssim(a, b, cfg), 1e-10);
    cfg.ssim_window = 5;
    cfg.ssim_sigma = 0.8;
    EXPECT_NEAR(value(ssim(tape, a, b, cfg)), naive_ssim(a, b, cfg), 1e-10);
  }
}

TEST(SSIM, SymmetricAndBounded) {
  const auto cfg = LossConfig::for_dynamic_range(1.0);
  Tape<float> tape(false);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto a = random_tensor<float>({1, 1, 10, 12}, seed, 0, 1);
    auto b = random_tensor<float>({1, 1, 10, 12}, seed + 100, 0, 1);
    const float ab = value(ssim(tape, a, b, cfg)), ba = value(ssim(tape, b, a, cfg));
    EXPECT_NEAR(ab, ba, 1e-6);
    EXPECT_GE(ab, -1.0f);
    EXPECT_LE(ab, 1.0f);
    const float d = value(dssim_loss(tape, a, b, cfg));
    EXPECT_GE(d, 0.0f);
    EXPECT_LE(d, 1.0f);
  }
}

TEST(SSIM, AntiCorrelatedBinaryImageIsNegative) {
  const double range = 1.0;
  const auto cfg = LossConfig::for_dynamic_range(range);
  auto x = checkerboard(12, 12, 0.0, range);
  auto inv = checkerboard(12, 12, range, 0.0);
  Tape<double> tape(false);
  const double s = value(ssim(tape, x, inv, cfg));
  EXPECT_LT(s, 0.0);
  EXPECT_NEAR(s, naive_ssim(x, inv, cfg), 1e-10);
}

TEST(DSSIM, IdenticalIsZeroAndAntiCorrelatedApproachesOne) {
  Tape<double> tape(false);
  auto cfg = LossConfig::for_dynamic_range(1.0);
  auto x = random_tensor<double>({1, 1, 8, 8}, 3, 0, 1);
  EXPECT_EQ(value(dssim_loss(tape, x, x, cfg)), 0.0);
  // Mirror-image checkerboards have equal local means and covariance -var,
  // so SSIM -> -1 as C1, C2 -> 0. The oracle gives the exact value.
  cfg.c1 = cfg.c2 = 1e-12;
  auto a = checkerboard(12, 12, 0.0, 1.0);
  auto b = checkerboard(12, 12, 1.0, 0.0);
  const double d = value(dssim_loss(tape, a, b, cfg));
  EXPECT_NEAR(d, (1.0 - naive_ssim(a, b, cfg)) / 2.0, 1e-10);
  EXPECT_GT(d, 0.99);
}

// ---- gradient and L1 terms -----------------------------------------------------

TEST(GradLoss, HandComputedRamp) {
  Tape<double> tape(false);
  auto y = Tensor<double>::full({1, 1, 3, 3}, 2.0);
  for (double s : {0.5, -1.25, 3.0}) {
    std::vector<double> v(9);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) v[i * 3 + j] = s * j;
    }
    auto ramp = Tensor<double>::from_vector({1, 1, 3, 3}, v);
    EXPECT_DOUBLE_EQ(value(grad_loss(tape, y, ramp)), std::abs(s));
    EXPECT_DOUBLE_EQ(value(grad_loss(tape, y, ramp, GradNorm::kL2)), s * s);
  }
  EXPECT_EQ(value(grad_loss(tape, y, y)), 0.0);
  EXPECT_THROW(grad_loss(tape, y, Tensor<double>::zeros({1, 1, 3, 2})), ShapeError);
}

TEST(GradLoss, InvariantToConstantShifts) {
  Tape<double> tape(false);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    // Values on a 1/64 grid keep every difference exact, so the shift
    // invariance holds bit for bit.
    auto y = random_tensor<double>({2, 1, 6, 7}, seed, 0, 4);
    auto yhat = random_tensor<double>({2, 1, 6, 7}, seed + 9, 0, 4);
    for (auto t : {y, yhat}) {
      for (double& v : t.mutable_data()) v = std::round(v * 64) / 64;
    }
    const double base = value(grad_loss(tape, y, yhat));
    for (double c : {0.5, -2.0, 16.0}) {
      auto shift = [&](const Tensor<double>& t) { return add_scalar(tape, t, c); };
      EXPECT_EQ(value(grad_loss(tape, y, shift(yhat))), base);
      EXPECT_EQ(value(grad_loss(tape, shift(y), yhat)), base);
    }
  }
}

TEST(L1Loss, HandArithmeticAndGradient) {
  Tape<double> none(false);
  auto y = Tensor<double>::zeros({1, 1, 1, 2});
  auto yhat = Tensor<double>::from_vector({1, 1, 1, 2}, {1, 3});
  EXPECT_EQ(value(l1_loss(none, y, yhat)), 2.0);
  EXPECT_EQ(value(l1_loss(none, y, y)), 0.0);
  auto a = random_tensor<double>({1, 1, 4, 5}, 1);
  auto b = random_tensor<double>({1, 1, 4, 5}, 2);
  b.set_requires_grad(true);
  Tape<double> tape;
  tape.backward(l1_loss(tape, a, b));
  for (std::size_t i = 0; i < b.numel(); ++i) {
    const double sign = b.data()[i] > a.data()[i] ? 1.0 : -1.0;
    EXPECT_DOUBLE_EQ(b.grad()[i], sign / 20.0);
  }
}

// ---- combined loss ----------------------------------------------------------------

TEST(CombinedLoss, ZeroOnIdenticalMaps) {
  const auto cfg = LossConfig::for_dynamic_range(5.0);
  Tape<float> tape(false);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto y = random_tensor<float>({2, 1, 12, 16}, seed, 0.2, 5);
    const auto t = combined_loss(tape, y, y, cfg);
    EXPECT_EQ(value(t.total), 0.0f);
  }
}

TEST(CombinedLoss, PositiveOnDistinctMaps) {
  const auto cfg = LossConfig::for_dynamic_range(5.0);
  Tape<float> tape(false);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto y = random_tensor<float>({1, 1, 8, 8}, seed, 0.2, 5);
    auto yhat = random_tensor<float>({1, 1, 8, 8}, seed + 1, 0.2, 5);
    EXPECT_GT(value(combined_loss(tape, y, yhat, cfg).total), 0.0f);
  }
}

TEST(CombinedLoss, EqualsSumOfTerms) {
  Tape<double> tape(false);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto cfg = LossConfig::for_dynamic_range(5.0);
    auto y = random_tensor<double>({2, 1, 12, 16}, seed, 0.2, 5);
    auto yhat = random_tensor<double>({2, 1, 12, 16}, seed + 7, 0.2, 5);
    const auto t = combined_loss(tape, y, yhat, cfg);
    const double separate = value(dssim_loss(tape, y, yhat, cfg)) + value(grad_loss(tape, y, yhat)) +
                            0.1 * value(l1_loss(tape, y, yhat));
    EXPECT_NEAR(value(t.total), separate, 1e-6);
    EXPECT_NEAR(value(t.total), value(t.dssim) + value(t.grad) + 0.1 * value(t.l1), 1e-12);
  }
}

TEST(CombinedLoss, LinearInLambda) {
  Tape<double> tape(false);
  auto y = random_tensor<double>({1, 1, 12, 16}, 4, 0.2, 5);
  auto yhat = random_tensor<double>({1, 1, 12, 16}, 5, 0.2, 5);
  auto cfg = LossConfig::for_dynamic_range(5.0);
  const double l1 = value(l1_loss(tape, y, yhat));
  cfg.lambda_l1 = 0.1;
  const double base = value(combined_loss(tape, y, yhat, cfg).total);
  for (double lambda : {0.05, 0.3, 1.0, 2.5}) {
    cfg.lambda_l1 = lambda;
    const double at = value(combined_loss(tape, y, yhat, cfg).total);
    EXPECT_NEAR(at - base, (lambda - 0.1) * l1, 1e-6);
  }
}

TEST(LossGradients, EachTermAndCombined) {
  const auto cfg = LossConfig::for_dynamic_range(5.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto y = random_tensor<float>({2, 1, 8, 10}, 700 + seed, 0.2, 5);
    auto yhat = random_tensor<float>({2, 1, 8, 10}, 800 + seed, 0.2, 5);
    const Leaves32 leaves{y, yhat};
    const std::vector<std::string> names{"y", "yhat"};
    auto dssim = [&cfg](auto& tape, const auto& l) { return dssim_loss(tape, l[0], l[1], cfg); };
    auto grad = [](auto& tape, const auto& l) { return grad_loss(tape, l[0], l[1]); };
    auto grad2 = [](auto& tape, const auto& l) { return grad_loss(tape, l[0], l[1], GradNorm::kL2); };
    auto l1 = [](auto& tape, const auto& l) { return l1_loss(tape, l[0], l[1]); };
    auto total = [&cfg](auto& tape, const auto& l) { return combined_loss(tape, l[0], l[1], cfg).total; };
    expect_within(check_gradients(dssim, leaves, names), 1e-3);
    expect_within(check_gradients(grad, leaves, names), 1e-3);
    expect_within(check_gradients(grad2, leaves, names), 1e-3);
    expect_within(check_gradients(l1, leaves, names), 1e-3);
    expect_within(check_gradients(total, leaves, names), 1e-3);
  }
}

TEST(LossGradients, TinyModelThroughCombinedLoss) {
  auto m = init_model<float>(ModelConfig::guidedepth_tiny(), 31);
  const auto cfg = LossConfig::for_dynamic_range(5.0);
  auto fwd = [&cfg](auto& tape, auto& model) {
    using T = typename std::decay_t<decltype(model.head.weight)>::value_type;
    auto x = random_tensor<T>({2, 3, 16, 16}, 3, 0, 1);
    auto y = random_tensor<T>({2, 1, 16, 16}, 4, 1, 5);
    return combined_loss(tape, y, model_forward(tape, model, x, NormMode::kTrain), cfg).total;
  };
  expect_within(gdtest::model_gradcheck(m, fwd, "", 8, 1));
}
