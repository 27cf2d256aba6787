#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "guidedepth/ops.hpp"
#include "guidedepth/tape.hpp"
#include "guidedepth/tensor.hpp"

using namespace guidedepth;

TEST(Tensor, ShapeArithmetic) {
  const Shape s{2, 3, 4, 5};
  EXPECT_EQ(s.numel(), 120u);
  EXPECT_EQ(s.plane(), 20u);
  EXPECT_EQ(s.str(), "(2,3,4,5)");
}

TEST(Tensor, DataLengthMatchesShape) {
  auto t = Tensor<float>::zeros({2, 3, 4, 5});
  EXPECT_EQ(t.data().size(), 120u);
  EXPECT_THROW(Tensor<float>::from_vector({1, 1, 2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor<float>::zeros({1, -1, 2, 2}), ShapeError);
}

TEST(Tensor, IndexingIsRowMajorNchw) {
  std::vector<float> v(24);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
  auto t = Tensor<float>::from_vector({2, 3, 2, 2}, v);
  EXPECT_EQ(t.at(1, 2, 1, 0), 1 * 12 + 2 * 4 + 1 * 2 + 0);
  EXPECT_THROW(t.at(2, 0, 0, 0), std::out_of_range);
}

TEST(Tensor, HandlesShareStorageButCloneDoesNot) {
  auto a = Tensor<float>::zeros({1, 1, 1, 2});
  auto b = a;
  b.mutable_data()[0] = 5.0f;
  EXPECT_EQ(a.data()[0], 5.0f);
  auto c = a.clone();
  c.mutable_data()[0] = 1.0f;
  EXPECT_EQ(a.data()[0], 5.0f);
  EXPECT_FALSE(c.same_storage(a));
}

TEST(Tensor, GradBufferMatchesShapeAndIsLazy) {
  auto t = Tensor<double>::zeros({1, 2, 3, 3});
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.mutable_grad().size(), t.numel());
  EXPECT_TRUE(t.has_grad());
  t.clear_grad();
  EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, CastRoundTripsExactlyForFloatValues) {
  auto t = Tensor<float>::from_vector({1, 1, 1, 3}, {0.1f, -2.5f, 3e-7f});
  auto back = t.cast<double>().cast<float>();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.data()[i], t.data()[i]);
}

TEST(Tensor, NonFiniteValuesAreAnError) {
  auto t = Tensor<float>::from_vector({1, 1, 1, 2}, {1.0f, std::numeric_limits<float>::quiet_NaN()});
  EXPECT_THROW(check_finite("test", t), NonFiniteError);
  Tape<float> tape;
  EXPECT_THROW(sigmoid(tape, t), NonFiniteError);
  auto inf = Tensor<float>::full({1, 1, 1, 1}, std::numeric_limits<float>::infinity());
  EXPECT_THROW(scale(tape, inf, 1.0f), NonFiniteError);
}

TEST(Tape, SumGivesAllOnesGradient) {
  auto x = Tensor<double>::from_vector({1, 1, 2, 2}, {1, -2, 3, 4});
  x.set_requires_grad(true);
  Tape<double> tape;
  tape.backward(sum(tape, x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Tape, HalfSumOfSquaresGivesIdentityGradient) {
  auto x = Tensor<double>::from_vector({1, 2, 1, 2}, {0.5, -1.5, 2.0, 3.25});
  x.set_requires_grad(true);
  Tape<double> tape;
  tape.backward(scale(tape, sum(tape, mul(tape, x, x)), 0.5));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], x.data()[i]);
}

TEST(Tape, SecondBackwardWithoutForwardIsAnError) {
  auto x = Tensor<float>::full({1, 1, 2, 2}, 1.0f);
  x.set_requires_grad(true);
  Tape<float> tape;
  auto loss = sum(tape, x);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), AutodiffError);
  // A fresh forward pass on the same tape re-arms it.
  tape.backward(sum(tape, x));
  EXPECT_EQ(x.grad()[0], 2.0f);
}

TEST(Tape, NonScalarLossIsAnError) {
  auto x = Tensor<float>::full({1, 1, 2, 2}, 1.0f);
  x.set_requires_grad(true);
  Tape<float> tape;
  auto y = scale(tape, x, 2.0f);
  EXPECT_THROW(tape.backward(y), AutodiffError);
}

TEST(Tape, EmptyTapeIsAnError) {
  Tape<float> tape;
  EXPECT_THROW(tape.backward(Tensor<float>::scalar(1.0f)), AutodiffError);
}

TEST(Tape, DisabledTapeRecordsNothing) {
  auto x = Tensor<float>::full({1, 1, 2, 2}, 1.0f);
  x.set_requires_grad(true);
  Tape<float> tape(false);
  auto y = sum(tape, x);
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tape, GradientsAccumulateAcrossUses) {
  auto x = Tensor<double>::from_vector({1, 1, 1, 2}, {1.0, 2.0});
  x.set_requires_grad(true);
  Tape<double> tape;
  tape.backward(sum(tape, add(tape, x, x)));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 2.0);
}
