#include <gtest/gtest.h>

#include "shield/errors.hpp"
#include "shield/run.hpp"

using namespace shield;

TEST(RunConfig, EmptyObjectGivesDefaults) {
  const RunConfig c = parse_run_config("{}");
  EXPECT_EQ(c.synth.train_count, 600u);
  EXPECT_EQ(c.train.k_ref, 4u);
  EXPECT_EQ(c.ablation.name(), "full");
}

TEST(RunConfig, ReadsFields) {
  const RunConfig c = parse_run_config(
      R"({"seed": 5, "epochs": 7, "learning_rate": 0.01, "ablation": "spm+pcm", "mu_cr": 0, "activation": "identity"})");
  EXPECT_EQ(c.synth.seed, 5u);
  EXPECT_EQ(c.train.seed, 5u);
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_DOUBLE_EQ(c.train.adam.learning_rate, 0.01);
  EXPECT_EQ(c.ablation.name(), "spm+pcm");
  EXPECT_EQ(c.synth.mu_cr, 0.0);
  EXPECT_EQ(c.train.activation, Activation::kIdentity);
}

TEST(RunConfig, MalformedJsonReportsPosition) {
  try {
    parse_run_config("{\n  \"epochs\": 3,\n}");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column"), std::string::npos) << msg;
  }
}

TEST(RunConfig, RejectsBadValues) {
  EXPECT_THROW(parse_run_config(R"({"epochs": -1})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"epochs": 0})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"mu_sp": "big"})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"ablation": "none"})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"epochz": 3})"), ConfigError);
  EXPECT_THROW(parse_run_config("[1, 2]"), ConfigError);
}

TEST(RunConfig, JsonRoundTrip) {
  const RunConfig c = parse_run_config(R"({"seed": 3, "k_ref": 8, "selection": "macro_f1"})");
  const RunConfig back = parse_run_config(to_json(c).dump());
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(KValues, Parse) {
  EXPECT_EQ(parse_k_values("1,4,8,16"), (std::vector<std::size_t>{1, 4, 8, 16}));
  EXPECT_EQ(parse_k_values("3"), (std::vector<std::size_t>{3}));
  EXPECT_THROW(parse_k_values(""), ConfigError);
  EXPECT_THROW(parse_k_values("1,,2"), ConfigError);
  EXPECT_THROW(parse_k_values("0,2"), ConfigError);
  EXPECT_THROW(parse_k_values("4,x"), ConfigError);
}
