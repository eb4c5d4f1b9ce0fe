#include <gtest/gtest.h>

#include "scae/run_config.hpp"

using namespace scae;

namespace {

std::string contract_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const ContractError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(RunConfig, DefaultsAreValid) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  const NetworkSpec s = c.network(HeadKind::autoencoder);
  EXPECT_EQ(s.encoder_depth(), 4);
  EXPECT_EQ(s.in_height, 29);
}

TEST(RunConfig, TextRoundTrip) {
  RunConfig c;
  c.mode = RunMode::finetune;
  c.stage_counts = {5, 5, 5, 0};
  c.width = 128;
  c.noise = CorruptionSpec::block_mask(4, 0, 0);
  c.schedule = {1e-4, {{10, 0.1}, {20, 0.1}}};
  c.label_budget = 4000;
  c.data.source = "cifar10";
  c.data.dir = "/data/cifar";
  const std::string text = c.to_text();
  EXPECT_EQ(RunConfig::from_key_values(parse_key_values(text)), c);
  EXPECT_NE(text.find("net=5,5,5,0\n"), std::string::npos);
  EXPECT_NE(text.find("milestones=10:0.1,20:0.1\n"), std::string::npos);
}

TEST(RunConfig, PartialOverridesKeepBase) {
  RunConfig base;
  base.width = 8;
  const RunConfig c = RunConfig::from_key_values({{"epochs", "3"}}, base);
  EXPECT_EQ(c.width, 8);
  EXPECT_EQ(c.epochs, 3);
}

TEST(RunConfig, RejectsUnknownAndBadKeys) {
  EXPECT_NE(contract_message([] { RunConfig::from_key_values({{"widht", "3"}}); }).find("widht"), std::string::npos);
  EXPECT_NE(contract_message([] { RunConfig::from_key_values({{"epochs", "three"}}); }).find("epochs"),
            std::string::npos);
  EXPECT_THROW(RunConfig::from_key_values({{"mode", "train"}}), ContractError);
  RunConfig c;
  c.batch_size = 0;
  EXPECT_NE(contract_message([&] { c.validate(); }).find("batch_size"), std::string::npos);
  c = RunConfig{};
  c.data.synth_size = 24;  // smaller than the 29-pixel crop
  EXPECT_NE(contract_message([&] { c.validate(); }).find("crop"), std::string::npos);
  c = RunConfig{};
  c.corrupt_probability = 1.5;
  EXPECT_THROW(c.validate(), ContractError);
  c = RunConfig{};
  c.noise = CorruptionSpec::block_mask(2, 30, 30);
  EXPECT_NE(contract_message([&] { c.validate(); }).find("noise"), std::string::npos);
}

TEST(RunConfig, StageCounts) {
  EXPECT_EQ(parse_stage_counts("m=5,5,5,0"), (std::vector<int>{5, 5, 5, 0}));
  EXPECT_EQ(parse_stage_counts("3"), (std::vector<int>{3}));
  EXPECT_THROW(parse_stage_counts(""), ContractError);
  EXPECT_THROW(parse_stage_counts("2,-1"), ContractError);
}

TEST(RunConfig, ModeNames) {
  for (auto m : {RunMode::pretrain, RunMode::finetune, RunMode::probe_cls, RunMode::probe_recon, RunMode::eval_recon,
                 RunMode::eval_cls})
    EXPECT_EQ(parse_mode(to_string(m)), m);
}
