#include <gtest/gtest.h>

#include <cstdlib>

#include "test_support.hpp"

using namespace afclip;

TEST(Config, ParsesIni) {
  RunConfig c;
  apply_config_text(c,
                    "[model]\nwindows = 1,3\nadapter_heads = 4\naggregation = false\n"
                    "[loss]\nseg_alpha = none\ncls_alpha = 0.3\n"
                    "[train]\nlearning_rate = 0.002\n"
                    "[eval]\nshot_seeds = 5,6\n");
  EXPECT_EQ(c.model.windows, (std::vector<int>{1, 3}));
  EXPECT_EQ(c.model.adapter_heads, 4);
  EXPECT_FALSE(c.model.switches.aggregation);
  EXPECT_FALSE(c.loss.seg_alpha.has_value());
  EXPECT_EQ(*c.loss.cls_alpha, 0.3);
  EXPECT_EQ(c.train.learning_rate, 0.002);
  EXPECT_EQ(c.shot_seeds, (std::vector<std::uint64_t>{5, 6}));
}

TEST(Config, SerializeRoundTrip) {
  RunConfig c;
  c.model.window_sigma = 0.1 + 0.2;
  c.train.seed = 42;
  c.loss.cls_alpha = 0.25;
  c.category = "bottle";
  RunConfig d;
  apply_config_text(d, serialize_config(c));
  EXPECT_EQ(serialize_config(d), serialize_config(c));
  EXPECT_EQ(d.model.window_sigma, c.model.window_sigma);
}

TEST(Config, Errors) {
  RunConfig c;
  EXPECT_THROW(apply_config_text(c, "[model]\nwidth = 3\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "[train]\nbatch_size = eight\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "[model]\naggregation = maybe\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "loose = 1\n"), ConfigError);
  EXPECT_THROW(apply_config_file(c, "/nonexistent.ini"), ConfigError);
  c.loss.seg_alpha = 1.0;
  EXPECT_THROW(validate_config(c), ConfigError);
}

TEST(Config, HashIgnoresOutputLocation) {
  RunConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.output_dir = "/elsewhere";
  b.weights_dir = "/weights";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.train.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, WeightsDirFromEnvironment) {
  RunConfig c;
  ::setenv("AFCLIP_WEIGHTS_DIR", "/from/env", 1);
  EXPECT_EQ(resolved_weights_dir(c), "/from/env");
  c.weights_dir = "/explicit";
  EXPECT_EQ(resolved_weights_dir(c), "/explicit");
  ::unsetenv("AFCLIP_WEIGHTS_DIR");
}

TEST(Config, EveryFieldRoundTrips) {
  const RunConfig c;
  for (const auto& f : config_fields()) {
    RunConfig d;
    f.set(d, f.get(c));
    EXPECT_EQ(f.get(d), f.get(c)) << f.name;
  }
}
