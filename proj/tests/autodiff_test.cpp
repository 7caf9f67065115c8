#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "sfoda/autodiff.hpp"
#include "sfoda/error.hpp"
#include "test_util.hpp"

using sfoda::Matrix;
using sfoda::Rng;
namespace ad = sfoda::ad;
using testutil::expect_gradients_match;
using testutil::uniform_matrix;

TEST(Matmul, IdentityAndRowSelection) {
  const Matrix a{{1, 2}, {3, 4}};
  EXPECT_EQ(ad::matmul(ad::Value::constant(a), ad::Value::constant(Matrix::identity(2))).data(), a);
  const auto r = ad::matmul(ad::Value::constant(Matrix{{1, 0}}), ad::Value::constant(Matrix{{2}, {5}}));
  EXPECT_EQ(r.data(), (Matrix{{2}}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    ad::matmul(ad::Value::constant(Matrix(2, 3)), ad::Value::constant(Matrix(2, 3)));
    FAIL() << "expected DimensionError";
  } catch (const sfoda::DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientOfSum) {
  Rng rng(11);
  expect_gradients_match([](const auto& v) { return ad::sum(ad::matmul(v[0], v[1])); },
                         {uniform_matrix(3, 4, rng), uniform_matrix(4, 2, rng)});
}

TEST(Softmax, UniformAndStable) {
  const auto s = ad::softmax_rows(ad::Value::constant(Matrix{{0, 0, 0, 0}})).data();
  for (double v : s.values()) EXPECT_DOUBLE_EQ(v, 0.25);
  const auto big = ad::softmax_rows(ad::Value::constant(Matrix{{1000, 0}})).data();
  EXPECT_NEAR(big(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(big(0, 1), 0.0, 1e-12);
  EXPECT_TRUE(big.all_finite());
}

TEST(Softmax, RowsSumToOneForLargeInputs) {
  Rng rng(3);
  const auto s = ad::softmax_rows(ad::Value::constant(uniform_matrix(20, 7, rng, -1e4, 1e4))).data();
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double total = 0.0;
    for (double v : s.row(i)) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Softmax, NonFiniteInputThrows) {
  EXPECT_THROW(ad::softmax_rows(ad::Value::constant(Matrix{{std::numeric_limits<double>::infinity(), 0}})),
               sfoda::NumericError);
  EXPECT_THROW(ad::softmax_rows(ad::Value::constant(Matrix{{std::nan(""), 0}})), sfoda::NumericError);
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  const Matrix w{{0.3, -1.2, 0.7}};
  expect_gradients_match(
      [&](const auto& v) { return ad::sum(ad::mul(ad::softmax_rows(v[0]), ad::Value::constant(w))); },
      {Matrix{{1, 2, 3}}});
}

TEST(Elementwise, Definitions) {
  EXPECT_DOUBLE_EQ(ad::log(ad::Value::constant(Matrix{{0.0}})).item(), std::log(1e-12));
  EXPECT_EQ(ad::relu(ad::Value::constant(Matrix{{-1, 2}})).data(), (Matrix{{0, 2}}));
  auto x = ad::Value::parameter(Matrix(2, 2, 1.0));
  auto s = ad::sum(x);
  EXPECT_DOUBLE_EQ(s.item(), 4.0);
  ad::backward(s);
  for (double g : x.grad().values()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Elementwise, ShapeMismatchIsDimensionError) {
  const auto a = ad::Value::constant(Matrix(2, 3));
  const auto b = ad::Value::constant(Matrix(3, 2));
  EXPECT_THROW(ad::add(a, b), sfoda::DimensionError);
  EXPECT_THROW(ad::mul(a, b), sfoda::DimensionError);
  EXPECT_THROW(ad::sub(a, b), sfoda::DimensionError);
  EXPECT_THROW(ad::concat_cols(a, b), sfoda::DimensionError);
  EXPECT_THROW(ad::slice_cols(a, 2, 4), sfoda::DimensionError);
}

// Every op on random inputs in [-2, 2], dims <= 6.
TEST(Elementwise, GradientsOfEveryOp) {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t r = 1 + rng.index(6), c = 2 + rng.index(5);
    const Matrix a = uniform_matrix(r, c, rng), b = uniform_matrix(r, c, rng);
    const Matrix w = uniform_matrix(r, c, rng);
    const auto weighted = [&](const ad::Value& v) { return ad::sum(ad::mul(v, ad::Value::constant(w))); };
    expect_gradients_match([&](const auto& v) { return weighted(ad::add(v[0], v[1])); }, {a, b});
    expect_gradients_match([&](const auto& v) { return weighted(ad::sub(v[0], v[1])); }, {a, b});
    expect_gradients_match([&](const auto& v) { return weighted(ad::mul(v[0], v[1])); }, {a, b});
    expect_gradients_match([&](const auto& v) { return weighted(ad::scale(v[0], -1.7)); }, {a});
    expect_gradients_match([&](const auto& v) { return weighted(ad::exp(v[0])); }, {a});
    expect_gradients_match([&](const auto& v) { return weighted(ad::relu(v[0])); }, {a});
    expect_gradients_match([&](const auto& v) { return ad::mean(ad::mul(v[0], v[0])); }, {a});
    expect_gradients_match([&](const auto& v) { return weighted(ad::log(ad::exp(v[0]))); }, {a});
    expect_gradients_match(
        [&](const auto& v) { return ad::sum(ad::mul(ad::slice_cols(v[0], 1, c), ad::slice_cols(v[0], 0, c - 1))); },
        {a});
    expect_gradients_match(
        [&](const auto& v) {
          return ad::sum(ad::mul(ad::concat_cols(v[0], v[1]), ad::concat_cols(v[1], v[0])));
        },
        {a, b});
    expect_gradients_match([&](const auto& v) { return ad::sum(ad::matmul(ad::transpose(v[0]), v[1])); }, {a, b});
    const Matrix row = uniform_matrix(1, c, rng);
    expect_gradients_match([&](const auto& v) { return weighted(ad::add(v[0], v[1])); }, {a, row});
  }
}

TEST(Backward, SumAndMean) {
  auto x = ad::Value::parameter(Matrix(3, 4, 2.0));
  ad::backward(ad::mean(x));
  for (double g : x.grad().values()) EXPECT_DOUBLE_EQ(g, 1.0 / 12.0);
}

TEST(Backward, AccumulatesAcrossCalls) {
  auto x = ad::Value::parameter(Matrix{{1.0, -2.0}});
  ad::backward(ad::sum(ad::mul(x, x)));
  ad::backward(ad::sum(ad::mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(x.grad()(0, 1), -8.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 0.0);
}

TEST(Backward, ReusedNodeSumsContributions) {
  auto x = ad::Value::parameter(Matrix{{3.0}});
  auto y = ad::add(x, ad::mul(x, x));
  ad::backward(ad::sum(y));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 7.0);
}

TEST(Backward, NonScalarRootIsContractError) {
  auto x = ad::Value::parameter(Matrix(2, 2, 1.0));
  EXPECT_THROW(ad::backward(x), sfoda::ContractError);
}

TEST(Backward, ConstantsKeepZeroGrad) {
  auto x = ad::Value::parameter(Matrix{{1.0, 2.0}});
  auto c = ad::Value::constant(Matrix{{3.0, 4.0}});
  ad::backward(ad::sum(ad::mul(x, c)));
  for (double g : c.grad().values()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(c.grad().rows(), c.data().rows());
  EXPECT_EQ(c.grad().cols(), c.data().cols());
}

TEST(Backward, CompositeGraph) {
  Rng rng(19);
  const Matrix w1 = uniform_matrix(3, 4, rng), x = uniform_matrix(5, 3, rng), b = uniform_matrix(1, 4, rng);
  expect_gradients_match(
      [&](const auto& v) {
        auto h = ad::relu(ad::add(ad::matmul(v[0], v[1]), v[2]));
        auto p = ad::softmax_rows(h);
        return ad::scale(ad::sum(ad::log(p)), -1.0 / 5.0);
      },
      {x, w1, b});
}

TEST(Determinism, IdenticalInputsBitwiseIdenticalOutputs) {
  Rng rng(5);
  const Matrix a = uniform_matrix(4, 3, rng), b = uniform_matrix(3, 5, rng);
  auto run = [&] {
    return ad::softmax_rows(ad::matmul(ad::Value::constant(a), ad::Value::constant(b))).data();
  };
  EXPECT_EQ(run(), run());
}
