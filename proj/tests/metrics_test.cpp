#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "sfoda/metrics.hpp"
#include "sfoda/trainer.hpp"

using namespace sfoda;

TEST(Evaluate, PerfectPredictor) {
  const std::vector<int> truth{0, 1, 2, 3, 4, 5, 1, 0};
  std::vector<int> pred;
  for (int y : truth) pred.push_back(y >= 4 ? kUnknownLabel : y);
  const auto r = evaluate(pred, truth, 4);
  EXPECT_EQ(r.os, 1.0);
  EXPECT_EQ(r.os_star, 1.0);
  EXPECT_EQ(r.total_acc, 1.0);
}

TEST(Evaluate, AlwaysUnknown) {
  const std::vector<int> truth{0, 1, 2, 3, 4, 5, 4, 5, 5, 0};
  const std::vector<int> pred(truth.size(), kUnknownLabel);
  const auto r = evaluate(pred, truth, 4);
  EXPECT_DOUBLE_EQ(r.os, 1.0 / 5.0);
  EXPECT_EQ(r.os_star, 0.0);
  EXPECT_DOUBLE_EQ(r.total_acc, 5.0 / 10.0);
  EXPECT_EQ(r.unknown_acc(), 1.0);
}

// Two known classes, 10 instances.
//   class 0: 4 instances, 3 right      -> 0.75
//   class 1: 3 instances, 2 right      -> 2/3
//   unknown: 3 instances, 2 right      -> 2/3
// OS* = (0.75 + 2/3) / 2 = 0.70833, OS = (0.75 + 4/3) / 3 = 0.69444,
// Acc = 7/10.
TEST(Evaluate, HandBuiltCase) {
  const std::vector<int> truth{0, 0, 0, 0, 1, 1, 1, 2, 3, 2};
  const std::vector<int> pred{0, 0, 0, 1, 1, 1, -1, -1, -1, 0};
  const auto r = evaluate(pred, truth, 2);
  EXPECT_NEAR(r.os_star, (0.75 + 2.0 / 3.0) / 2.0, 1e-14);
  EXPECT_NEAR(r.os, (0.75 + 4.0 / 3.0) / 3.0, 1e-14);
  EXPECT_DOUBLE_EQ(r.total_acc, 0.7);
  EXPECT_EQ(r.confusion[0][1], 1u);
  EXPECT_EQ(r.confusion[1][2], 1u);
  EXPECT_EQ(r.confusion[2][0], 1u);
  EXPECT_EQ(r.n_per_class, (std::vector<std::size_t>{4, 3, 3}));
}

TEST(Evaluate, AbsentClassIsUndefined) {
  try {
    evaluate(std::vector<int>{0, 0}, std::vector<int>{0, 2}, 3);
    FAIL();
  } catch (const UndefinedMetricError& e) {
    EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos) << e.what();
  }
  // Closed-set target: the unknown class has no instances.
  EXPECT_THROW(evaluate(std::vector<int>{0, 1}, std::vector<int>{0, 1}, 2), UndefinedMetricError);
}

TEST(Evaluate, InputErrors) {
  EXPECT_THROW(evaluate(std::vector<int>{0}, std::vector<int>{0, 1}, 2), DimensionError);
  EXPECT_THROW(evaluate(std::vector<int>{2, 0}, std::vector<int>{0, 2}, 2), ContractError);
  EXPECT_THROW(evaluate(std::vector<int>{-2, 0}, std::vector<int>{0, 2}, 2), ContractError);
}

TEST(Evaluate, PermutationInvariant) {
  std::mt19937_64 rng(4);
  std::vector<int> truth, pred;
  for (int i = 0; i < 200; ++i) {
    truth.push_back(static_cast<int>(rng() % 6));
    pred.push_back(static_cast<int>(rng() % 5) - 1);
  }
  const auto a = evaluate(pred, truth, 4);
  std::vector<std::size_t> order(truth.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> t2, p2;
  for (auto i : order) {
    t2.push_back(truth[i]);
    p2.push_back(pred[i]);
  }
  const auto b = evaluate(p2, t2, 4);
  EXPECT_EQ(a.os, b.os);
  EXPECT_EQ(a.os_star, b.os_star);
  EXPECT_EQ(a.total_acc, b.total_acc);
  EXPECT_EQ(a.confusion, b.confusion);
}

TEST(Evaluate, LinearIdentity) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng() % 5;
    std::vector<int> truth, pred;
    for (std::size_t c = 0; c <= k; ++c) truth.push_back(static_cast<int>(c));
    for (int i = 0; i < 50; ++i) truth.push_back(static_cast<int>(rng() % (k + 2)));
    for (std::size_t i = 0; i < truth.size(); ++i) pred.push_back(static_cast<int>(rng() % (k + 1)) - 1);
    const auto r = evaluate(pred, truth, k);
    const double kd = static_cast<double>(k);
    EXPECT_NEAR(r.os, (kd * r.os_star + r.unknown_acc()) / (kd + 1.0), 1e-12);
  }
}

TEST(Summary, SingleRunAndSampleStd) {
  EvalReport a;
  a.os = 0.8;
  a.os_star = 0.9;
  a.total_acc = 0.7;
  EvalReport b = a;
  b.os = 0.6;
  const auto one = sweep_summary({{"beta", "1.3", a}});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].n, 1u);
  EXPECT_EQ(one[0].os.mean, 0.8);
  EXPECT_EQ(one[0].os.std, 0.0);
  EXPECT_EQ(one[0].acc.mean, 0.7);

  const auto two = sweep_summary({{"beta", "1.3", a}, {"beta", "0.85", a}, {"beta", "1.3", b}});
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].value, "1.3");
  EXPECT_EQ(two[0].n, 2u);
  EXPECT_NEAR(two[0].os.mean, 0.7, 1e-12);
  // Sample std of {0.8, 0.6}: sqrt(0.02 / 1).
  EXPECT_NEAR(two[0].os.std, std::sqrt(0.02), 1e-12);
  EXPECT_EQ(two[1].n, 1u);
}

TEST(Summary, MeanStdEdges) {
  EXPECT_EQ(mean_std({}).mean, 0.0);
  const auto m = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_DOUBLE_EQ(m.std, std::sqrt(5.0 / 3.0));
}
