#include <cmath>

#include <gtest/gtest.h>

#include "sfoda/data.hpp"
#include "sfoda/optim.hpp"
#include "sfoda/trainer.hpp"
#include "test_util.hpp"

using namespace sfoda;

TEST(Sgd, PlainGradientDescent) {
  Matrix p{{1.0, -2.0}}, v(1, 2);
  sgd_update(p, Matrix{{0.5, 4.0}}, v, SgdConfig{0.1, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(p(0, 0), 1.0 - 0.05);
  EXPECT_DOUBLE_EQ(p(0, 1), -2.0 - 0.4);
}

TEST(Sgd, BufferDecayWithZeroGradient) {
  Matrix p{{0.0}}, v{{2.0}};
  sgd_update(p, Matrix{{0.0}}, v, SgdConfig{0.1, 0.9, 0.0});
  EXPECT_DOUBLE_EQ(v(0, 0), 1.8);
  EXPECT_DOUBLE_EQ(p(0, 0), -0.1 * 0.9 * 2.0);
}

// Two steps by hand: lr 0.1, momentum 0.5, wd 0.2, constant grad 1, p0 = 1.
//   v1 = 1 + 0.2 = 1.2,            p1 = 1 - 0.12 = 0.88
//   v2 = 0.6 + 1 + 0.176 = 1.776,  p2 = 0.88 - 0.1776 = 0.7024
TEST(Sgd, TwoHandComputedSteps) {
  Matrix p{{1.0}}, v(1, 1);
  const SgdConfig cfg{0.1, 0.5, 0.2};
  sgd_update(p, Matrix{{1.0}}, v, cfg);
  EXPECT_NEAR(p(0, 0), 0.88, 1e-15);
  sgd_update(p, Matrix{{1.0}}, v, cfg);
  EXPECT_NEAR(v(0, 0), 1.776, 1e-15);
  EXPECT_NEAR(p(0, 0), 0.7024, 1e-15);
}

TEST(Sgd, ShapeAndConfigErrors) {
  Matrix p(1, 2), v(1, 2);
  EXPECT_THROW(sgd_update(p, Matrix(2, 1), v, {}), ContractError);
  EXPECT_THROW((SgdConfig{0.1, 1.0, 0.0}.validate()), ContractError);
  EXPECT_THROW((SgdConfig{-0.1, 0.5, 0.0}.validate()), ContractError);
  EXPECT_THROW(OptimState(SgdConfig{0.1, 0.9, -1.0}), ContractError);
  auto a = ad::Value::parameter(Matrix(1, 2));
  auto b = ad::Value::parameter(Matrix(1, 2));
  OptimState st;
  std::vector<ad::Value> one{a}, two{a, b};
  sgd_step(one, st);
  EXPECT_THROW(sgd_step(two, st), ContractError);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  const std::vector<int> y{0, 3};
  EXPECT_NEAR(cross_entropy_loss(ad::Value::constant(Matrix(2, 4)), y).item(), std::log(4.0), 1e-12);
  EXPECT_THROW(cross_entropy_loss(ad::Value::constant(Matrix(2, 4)), std::vector<int>{0, 4}), ContractError);
  EXPECT_THROW(cross_entropy_loss(ad::Value::constant(Matrix(2, 4)), std::vector<int>{0}), DimensionError);
}

TEST(CrossEntropy, Gradient) {
  Rng rng(1);
  const std::vector<int> y{1, 0, 2};
  testutil::expect_gradients_match([&](const auto& v) { return cross_entropy_loss(v[0], y); },
                                   {testutil::uniform_matrix(3, 3, rng)});
}

TEST(Predict, RuleExamples) {
  // All mass on known 3; unknown mass 0.6 vs best known 0.4; exact tie.
  const Matrix probs{{0, 0, 0, 1, 0, 0}, {0.4, 0, 0, 0, 0.3, 0.3}, {0.5, 0, 0, 0, 0.25, 0.25}};
  EXPECT_EQ(predict_from_probabilities(probs, 4), (std::vector<int>{3, kUnknownLabel, 0}));
}

TEST(Predict, KnownTiesGoToLowestIndex) {
  EXPECT_EQ(predict_from_probabilities(Matrix{{0.3, 0.3, 0.2, 0.2}}, 3), (std::vector<int>{0}));
}

TEST(Predict, UnexpandedModelNeverUnknown) {
  const auto m = build_classifier(2, {4}, 3, 0, 0);
  Rng rng(3);
  for (int p : predict_open_set(m, testutil::uniform_matrix(20, 2, rng))) EXPECT_GE(p, 0);
}

namespace {

struct Fixture {
  DomainPair data;
  ExpandedClassifier source;
};

// Small problem so adaptation tests stay quick.
const Fixture& small_problem() {
  static const Fixture f = [] {
    SynthConfig sc;
    sc.source_per_class = 60;
    sc.target_per_class = 40;
    Fixture out{generate_synthetic(sc, 1), {}};
    SourceTrainConfig tc;
    tc.hidden_dims = {16};
    tc.epochs = 40;
    tc.batch_size = 16;
    tc.sgd.learning_rate = 0.01;
    out.source = train_source(out.data.source, sc.num_known, tc).model;
    return out;
  }();
  return f;
}

AdaptConfig quick_adapt() {
  AdaptConfig a;
  a.steps = 40;
  a.extra_outputs = 3;
  return a;
}

}  // namespace

TEST(Objective, ComposesWeightedParts) {
  const auto& f = small_problem();
  auto m = expand_head(f.source, 3, 1);
  AdaptConfig cfg = quick_adapt();
  cfg.alpha_p = 0.3;
  cfg.alpha_c = 2.0;
  const Matrix kx = f.data.target_features.gather_rows(std::vector<std::size_t>{0, 1});
  const Matrix ux = f.data.target_features.gather_rows(std::vector<std::size_t>{2, 3});
  const Matrix cx = f.data.target_features.gather_rows(std::vector<std::size_t>{4, 5, 6});
  const std::vector<int> ky{0, 1};
  Rng r1(5), r2(5);
  const auto parts = adaptation_objective(m, cfg, kx, ky, ux, cx, r1);
  const double lp = pseudo_label_loss(m, kx, ky, ux).item();
  const double lc = consistency_loss(m, cx, cfg.transform, cfg.beta, r2).item();
  EXPECT_DOUBLE_EQ(parts.pseudo_label.item(), lp);
  EXPECT_DOUBLE_EQ(parts.consistency.item(), lc);
  EXPECT_NEAR(parts.total.item(), 0.3 * lp + 2.0 * lc, 1e-12);

  cfg.alpha_c = 0.0;
  Rng r3(5);
  const auto pl_only = adaptation_objective(m, cfg, kx, ky, ux, cx, r3);
  EXPECT_FALSE(pl_only.consistency.valid());
  EXPECT_NEAR(pl_only.total.item(), 0.3 * lp, 1e-12);
}

TEST(Adapt, SourceModelUntouchedAndDeterministic) {
  const auto& f = small_problem();
  std::ostringstream before;
  write_checkpoint(before, f.source);
  const auto a = adapt(f.source, f.data.target_features, quick_adapt());
  const auto b = adapt(f.source, f.data.target_features, quick_adapt());
  std::ostringstream after, ca, cb;
  write_checkpoint(after, f.source);
  write_checkpoint(ca, a.model);
  write_checkpoint(cb, b.model);
  EXPECT_EQ(before.str(), after.str());
  EXPECT_EQ(ca.str(), cb.str());
  ASSERT_EQ(a.log.size(), 40u);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].total, b.log[i].total);
    EXPECT_TRUE(std::isfinite(a.log[i].total));
  }
  EXPECT_EQ(a.model.metadata().steps, 40u);
  EXPECT_EQ(a.model.num_extra(), 3u);
}

TEST(Adapt, AblationModes) {
  const auto& f = small_problem();
  AdaptConfig pl = quick_adapt();
  pl.alpha_c = 0.0;
  const auto r_pl = adapt(f.source, f.data.target_features, pl);
  EXPECT_TRUE(r_pl.pseudo_labels.has_value());
  for (const auto& e : r_pl.log) EXPECT_EQ(e.consistency_loss, 0.0);

  AdaptConfig tc = quick_adapt();
  tc.alpha_p = 0.0;
  const auto r_tc = adapt(f.source, f.data.target_features, tc);
  EXPECT_FALSE(r_tc.pseudo_labels.has_value());
  for (const auto& e : r_tc.log) EXPECT_EQ(e.pseudo_label_loss, 0.0);

  AdaptConfig none = quick_adapt();
  none.alpha_p = none.alpha_c = 0.0;
  EXPECT_THROW(adapt(f.source, f.data.target_features, none), ContractError);
}

TEST(Adapt, Preconditions) {
  const auto& f = small_problem();
  EXPECT_THROW(adapt(expand_head(f.source, 2, 0), f.data.target_features, quick_adapt()), ContractError);
  EXPECT_THROW(adapt(f.source, Matrix(4, 3), quick_adapt()), DimensionError);
  AdaptConfig bad = quick_adapt();
  bad.beta = 0.0;
  EXPECT_THROW(adapt(f.source, f.data.target_features, bad), ContractError);
}

TEST(Adapt, PseudoLabelLossDecreases) {
  const auto& f = small_problem();
  AdaptConfig cfg = quick_adapt();
  cfg.alpha_c = 0.0;
  cfg.alpha_p = 1.0;
  cfg.steps = 400;
  cfg.sgd.learning_rate = 0.01;
  const auto r = adapt(f.source, f.data.target_features, cfg);
  auto window_mean = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t i = from; i < from + 50; ++i) s += r.log[i].pseudo_label_loss;
    return s / 50.0;
  };
  EXPECT_LT(window_mean(350), 0.5 * window_mean(0));
}

TEST(SourceTraining, SeparableToy) {
  SynthConfig sc;
  sc.num_known = 2;
  sc.num_unknown = 0;
  sc.source_per_class = 100;
  const auto d = generate_synthetic(sc, 2);
  SourceTrainConfig tc;
  tc.epochs = 200;
  tc.hidden_dims = {16};
  const auto r = train_source(d.source, 2, tc);
  EXPECT_GE(r.train_accuracy, 0.99);
  EXPECT_LT(r.epoch_loss.back(), r.initial_loss);
  for (double l : r.epoch_loss) EXPECT_TRUE(std::isfinite(l));
}

TEST(SourceTraining, ZeroEpochsIsInitialisation) {
  const auto d = generate_synthetic(SynthConfig{}, 0);
  SourceTrainConfig tc;
  tc.epochs = 0;
  tc.seed = 11;
  const auto r = train_source(d.source, 4, tc);
  std::ostringstream a, b;
  auto init = build_classifier(2, tc.hidden_dims, 4, 0, 11);
  write_checkpoint(a, r.model);
  write_checkpoint(b, init);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_TRUE(r.epoch_loss.empty());
  EXPECT_EQ(r.model.metadata().steps, 0u);
}

TEST(SourceTraining, Errors) {
  SourceTrainConfig tc;
  EXPECT_THROW(train_source(LabeledData{Matrix(0, 2), {}}, 2, tc), ContractError);
  EXPECT_THROW(train_source(LabeledData{Matrix(2, 2), {0, 5}}, 2, tc), ContractError);
}
