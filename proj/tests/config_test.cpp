#include <cmath>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "sfoda/config.hpp"
#include "test_util.hpp"

using namespace sfoda;

TEST(Config, EmptyTextGivesPaperDefaults) {
  const auto c = parse_config("");
  EXPECT_EQ(c.adapt.extra_outputs, 8u);
  EXPECT_EQ(c.adapt.steps, 2000u);
  EXPECT_DOUBLE_EQ(c.adapt.alpha_p, 0.1);
  EXPECT_DOUBLE_EQ(c.adapt.alpha_c, 1.0);
  EXPECT_DOUBLE_EQ(c.adapt.beta, 1.3);
  EXPECT_DOUBLE_EQ(c.adapt.sgd.learning_rate, 0.0005);
  EXPECT_DOUBLE_EQ(c.adapt.sgd.momentum, 0.9);
  EXPECT_DOUBLE_EQ(c.adapt.sgd.weight_decay, 0.0005);
  EXPECT_FALSE(c.adapt.thresholds.has_value());
  EXPECT_EQ(c.adapt.confidence, ConfidenceMeasure::entropy);
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.jobs, 1u);
}

TEST(Config, SectionsAndComments) {
  const auto c = parse_config(
      "# comment\n"
      "seed = 7\n"
      "[adapt]\n"
      "beta = 0.85   \n"
      "; other comment\n"
      "K = 3\n"
      "[model]\n"
      "hidden = 8, 4\n");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_DOUBLE_EQ(c.adapt.beta, 0.85);
  EXPECT_EQ(c.adapt.extra_outputs, 3u);
  EXPECT_EQ(c.hidden_dims, (std::vector<std::size_t>{8, 4}));
  EXPECT_EQ(c.source.hidden_dims, c.hidden_dims);
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    parse_config("[adapt]\nbetta = 1.0\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("adapt.betta"), std::string::npos) << e.what();
  }
}

TEST(Config, BadValuesRejected) {
  for (const char* text : {"adapt.beta = abc", "adapt.K = -1", "adapt.steps = 1.5", "jobs = 0",
                           "adapt.beta = 0", "adapt.alpha_p = -1", "adapt.confidence = vibes",
                           "data.kind = parquet", "adapt.momentum = 1.0", "sweep.parameter = lr",
                           "[adapt\nbeta = 1", "just words", "data.num_known = 1", "adapt.beta = inf"})
    EXPECT_THROW(parse_config(text), ConfigError) << text;
}

TEST(Config, ValueErrorsNameTheKey) {
  try {
    parse_config("adapt.steps = many");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("adapt.steps"), std::string::npos) << e.what();
  }
}

TEST(Config, AutoThresholdsResolveFromClassCount) {
  const auto c = parse_config("adapt.delta_u = auto\n");
  // Nothing pinned: adaptation falls back to the class-count defaults.
  EXPECT_FALSE(resolved_thresholds(c, 4).has_value());
  const auto d = parse_config("adapt.delta_k = 0.01\n");
  const auto td = resolved_thresholds(d, 4);
  ASSERT_TRUE(td.has_value());
  EXPECT_DOUBLE_EQ(td->delta_k, 0.01);
  EXPECT_NEAR(td->delta_u, std::log(4.0) / 2.0, 1e-15);
}

TEST(Config, ThresholdOrderingValidated) {
  EXPECT_THROW(parse_config("adapt.delta_k = 0.5\nadapt.delta_u = 0.4\n"), ConfigError);
  EXPECT_THROW(parse_config("adapt.delta_u = 5\n"), ConfigError);  // above log 4
  EXPECT_THROW(parse_config("adapt.delta_k = -0.1\n"), ConfigError);
  EXPECT_NO_THROW(parse_config("adapt.delta_k = 0.1\nadapt.delta_u = 0.6\n"));
}

TEST(Config, DumpRoundTrips) {
  const auto c = parse_config(
      "seed = 12\nadapt.beta = 0.85\nadapt.delta_k = 0.05\nadapt.rotation_max_degrees = 15\n"
      "sweep.values = 0.5, 1.5\nmodel.hidden = 32\n");
  const std::string once = dump_config(c);
  const std::string twice = dump_config(parse_config(once));
  EXPECT_EQ(once, twice);
  EXPECT_NE(once.find("adapt.delta_u = auto"), std::string::npos);
  EXPECT_NE(once.find("seed = 12"), std::string::npos);
  EXPECT_NEAR(c.adapt.transform.rotation_max_radians, 15.0 * std::numbers::pi / 180.0, 1e-15);
}

TEST(Config, LoadFromFile) {
  testutil::TempDir dir("config");
  EXPECT_THROW(load_config((dir.path() / "nope.ini").string()), ConfigError);
  {
    std::ofstream f((dir.path() / "a.ini").string());
    f << "[adapt]\nsteps = 5\n";
  }
  EXPECT_EQ(load_config((dir.path() / "a.ini").string()).adapt.steps, 5u);
}
