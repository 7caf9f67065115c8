#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "sfoda/csv.hpp"
#include "sfoda/data.hpp"
#include "sfoda/trainer.hpp"
#include "test_util.hpp"

using namespace sfoda;

TEST(Synthetic, SameSeedSameBytes) {
  const SynthConfig cfg;
  const auto a = generate_synthetic(cfg, 3);
  const auto b = generate_synthetic(cfg, 3);
  EXPECT_EQ(a.source.features, b.source.features);
  EXPECT_EQ(a.source.labels, b.source.labels);
  EXPECT_EQ(a.target_features, b.target_features);
  EXPECT_EQ(a.target_labels_hidden, b.target_labels_hidden);
  EXPECT_NE(generate_synthetic(cfg, 4).target_features, a.target_features);
}

TEST(Synthetic, CountsAndLabelRanges) {
  SynthConfig cfg;
  cfg.dim = 5;
  cfg.num_known = 3;
  cfg.num_unknown = 4;
  cfg.source_per_class = 20;
  cfg.target_per_class = 10;
  const auto d = generate_synthetic(cfg, 0);
  EXPECT_EQ(d.source.features.rows(), 60u);
  EXPECT_EQ(d.source.features.cols(), 5u);
  EXPECT_EQ(d.target_features.rows(), 70u);
  std::vector<int> counts(7, 0);
  for (int y : d.source.labels) {
    ASSERT_GE(y, 0);
    ASSERT_LT(y, 3);
  }
  for (int y : d.target_labels_hidden) {
    ASSERT_GE(y, 0);
    ASSERT_LT(y, 7);
    counts[static_cast<std::size_t>(y)]++;
  }
  for (int c : counts) EXPECT_EQ(c, 10);
}

TEST(Synthetic, NoUnknownClasses) {
  SynthConfig cfg;
  cfg.num_unknown = 0;
  const auto d = generate_synthetic(cfg, 1);
  EXPECT_EQ(d.target_features.rows(), cfg.num_known * cfg.target_per_class);
  for (int y : d.target_labels_hidden) EXPECT_LT(y, static_cast<int>(cfg.num_known));
}

TEST(Synthetic, ZeroSeparationWarnsOnly) {
  SynthConfig cfg;
  cfg.radius = 0.0;
  const auto d = generate_synthetic(cfg, 1);
  EXPECT_FALSE(d.warnings.empty());
}

TEST(Synthetic, BadConfigRejected) {
  SynthConfig cfg;
  cfg.num_known = 1;
  EXPECT_THROW(generate_synthetic(cfg, 0), ContractError);
  cfg = {};
  cfg.dim = 1;
  EXPECT_THROW(generate_synthetic(cfg, 0), ContractError);
}

// Without a domain shift the source classifier should carry over to the
// target's known classes.
TEST(Synthetic, NoShiftSanity) {
  SynthConfig cfg;
  cfg.shift_degrees = 0.0;
  cfg.shift_translation = {0.0, 0.0};
  const auto d = generate_synthetic(cfg, 0);
  SourceTrainConfig tc;
  const auto src = train_source(d.source, cfg.num_known, tc);
  std::vector<std::size_t> idx;
  std::vector<int> y;
  for (std::size_t i = 0; i < d.target_labels_hidden.size(); ++i)
    if (d.target_labels_hidden[i] < static_cast<int>(cfg.num_known)) {
      idx.push_back(i);
      y.push_back(d.target_labels_hidden[i]);
    }
  EXPECT_GE(accuracy_known(src.model, d.target_features.gather_rows(idx), y), 0.95);
}

TEST(Transform, IdentityIsBitwise) {
  Rng rng(0);
  const std::vector<double> x{0.1, -3.7, 12.25};
  EXPECT_EQ(transform(x, TransformPolicy::identity(), rng), x);
}

TEST(Transform, Reproducible) {
  const std::vector<double> x{1.0, 2.0, 3.0};
  Rng a(9), b(9);
  EXPECT_EQ(transform(x, {}, a), transform(x, {}, b));
}

// Pure noise: E||x+ - x||^2 = d * sigma^2.
TEST(Transform, NoiseEnergyMatchesClosedForm) {
  TransformPolicy p{0.1, 0.0, 1.0, 1.0};
  const std::vector<double> x{0.5, -1.0, 2.0, 0.0};
  Rng rng(17);
  const int draws = 100000;
  double total = 0.0;
  for (int i = 0; i < draws; ++i) {
    const auto t = transform(x, p, rng);
    for (std::size_t k = 0; k < x.size(); ++k) total += (t[k] - x[k]) * (t[k] - x[k]);
  }
  const double expected = static_cast<double>(x.size()) * 0.01;
  EXPECT_NEAR(total / draws, expected, 0.05 * expected);
}

TEST(Transform, RotationPreservesNorm) {
  TransformPolicy p{0.0, std::numbers::pi, 1.0, 1.0};
  const std::vector<double> x{3.0, 4.0, 0.0};
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const auto t = transform(x, p, rng);
    EXPECT_NEAR(std::hypot(t[0], t[1], t[2]), 5.0, 1e-12);
  }
}

// Default augmentation should keep nearly every sample nearest its own
// target center.
TEST(Transform, PreservesNearestCenter) {
  const SynthConfig cfg;
  const auto d = generate_synthetic(cfg, 5);
  auto nearest = [&](std::span<const double> v) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < d.target_centers.rows(); ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < v.size(); ++k) s += std::pow(v[k] - d.target_centers(c, k), 2);
      if (s < best_d) best_d = s, best = c;
    }
    return best;
  };
  Rng rng(1);
  const Matrix aug = transform_batch(d.target_features, {}, rng);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < aug.rows(); ++i) kept += nearest(aug.row(i)) == nearest(d.target_features.row(i));
  EXPECT_GE(static_cast<double>(kept) / static_cast<double>(aug.rows()), 0.99);
}

TEST(Transform, PolicyValidation) {
  EXPECT_THROW((TransformPolicy{-1.0, 0.0, 1.0, 1.0}.validate()), ContractError);
  EXPECT_THROW((TransformPolicy{0.1, 0.0, 1.2, 1.1}.validate()), ContractError);
}

class CsvFile : public ::testing::Test {
 protected:
  std::string write(const std::string& body) {
    const auto path = (dir_.path() / "in.csv").string();
    std::ofstream(path, std::ios::binary) << body;
    return path;
  }
  testutil::TempDir dir_{"csv"};
};

TEST_F(CsvFile, ThreeRowsTwoFeatures) {
  const auto ds = load_csv(write("a,b,label\n1,2,0\n3,4,1\n5,6,0\n"), "label", true);
  EXPECT_EQ(ds.features, (Matrix{{1, 2}, {3, 4}, {5, 6}}));
  EXPECT_EQ(*ds.labels, (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"a", "b"}));
}

TEST_F(CsvFile, MissingLabelColumn) {
  EXPECT_THROW(load_csv(write("a,b\n1,2\n"), "y", true), DataError);
}

TEST_F(CsvFile, CellsAreTrimmed) {
  const auto ds = load_csv(write("a, b\n  1.5 ,\t-2 \n"), "label", false);
  EXPECT_EQ(ds.features, (Matrix{{1.5, -2}}));
  EXPECT_FALSE(ds.labels.has_value());
}

TEST_F(CsvFile, NonNumericAndRagged) {
  EXPECT_THROW(load_csv(write("a,b\n1,x\n"), "label", false), DataError);
  EXPECT_THROW(load_csv(write("a,b\n1,2,3\n"), "label", false), DataError);
  EXPECT_THROW(load_csv(write("a,label\n1,-2\n"), "label", true), DataError);
}

TEST_F(CsvFile, WriteThenReadRoundTrip) {
  const auto d = generate_synthetic(SynthConfig{}, 2);
  const auto path = (dir_.path() / "src.csv").string();
  write_features_csv(path, d.source.features, &d.source.labels);
  const auto ds = load_csv(path, "label", true);
  EXPECT_EQ(ds.features, d.source.features);
  EXPECT_EQ(*ds.labels, d.source.labels);
}
