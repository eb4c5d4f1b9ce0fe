#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "scae/network.hpp"
#include "scae/pipeline.hpp"

using namespace scae;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_config() {
  RunConfig c;
  c.stage_counts = {1, 1};
  c.width = 4;
  c.crop = 15;
  c.epochs = 2;
  c.batch_size = 16;
  c.seed = 3;
  c.data.synth_train = 80;
  c.data.synth_test = 40;
  c.data.synth_size = 16;
  c.data.synth_classes = 4;
  return c;
}

const DataSplits& small_data() {
  static const DataSplits d = load_data(small_config().data);
  return d;
}

bool encoder_equal(const ParameterStore<float>& a, const ParameterStore<float>& b, const NetworkSpec& spec) {
  for (const auto& name : encoder_parameter_names(spec))
    if (!bitwise_equal(a.get(name), b.get(name))) return false;
  return true;
}

}  // namespace

TEST(Pipeline, HeldoutCount) {
  EXPECT_EQ(heldout_count(2000), 100u);
  EXPECT_EQ(heldout_count(10), 1u);
  EXPECT_THROW(heldout_count(1), ContractError);
}

TEST(Pipeline, SynthSplitsDiffer) {
  const auto& d = small_data();
  EXPECT_EQ(d.train.size(), 80u);
  EXPECT_EQ(d.test.size(), 40u);
  EXPECT_FALSE(bitwise_equal(slice(d.train, 0, 40).images, d.test.images));
}

TEST(Pipeline, ZeroNoiseIdentityStartsAtZeroLoss) {
  RunConfig c = small_config();
  c.noise = CorruptionSpec::gaussian(0.0);
  c.zero_residual = true;
  c.epochs = 1;
  const auto r = pretrain(c, small_data());
  EXPECT_EQ(r.initial_loss, 0.0);
}

TEST(Pipeline, PretrainArtifactsAndRecords) {
  const auto dir = fresh_dir("scae_pipe_pretrain");
  const auto r = pretrain(small_config(), small_data(), dir);
  for (const char* f : {"metrics.csv", "checkpoints/best.scae", "checkpoints/final.scae", "images/heldout.ppm"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  // epoch 0 held-out record, then train + held-out per epoch
  ASSERT_EQ(r.metrics.size(), 5u);
  EXPECT_EQ(r.metrics[0].split, "heldout");
  EXPECT_EQ(r.metrics[0].epoch, 0);
  EXPECT_EQ(r.metrics[1].split, "train");
  EXPECT_TRUE(r.metrics[2].psnr.has_value());
  EXPECT_FALSE(r.metrics[2].wall_seconds.has_value());
  EXPECT_NEAR(r.corrupted_psnr, 18.588, 0.2);
  const Checkpoint loaded = load_checkpoint(dir / "checkpoints/final.scae");
  ASSERT_TRUE(loaded.stats.has_value());
  ASSERT_TRUE(loaded.optimizer.has_value());
  EXPECT_EQ(encode_checkpoint(loaded), encode_checkpoint(r.final_checkpoint));
  std::filesystem::remove_all(dir);
}

TEST(Pipeline, StatsComeFromTrainingPortionOnly) {
  DataSplits altered = small_data();
  for (std::size_t i = 0; i < altered.test.images.size(); ++i) altered.test.images[i] = 255.0f;
  RunConfig c = small_config();
  c.epochs = 1;
  const auto a = pretrain(c, small_data());
  const auto b = pretrain(c, altered);
  EXPECT_EQ(a.final_checkpoint.stats, b.final_checkpoint.stats);
  const std::size_t keep = 80 - heldout_count(80);
  EXPECT_EQ(*a.final_checkpoint.stats, compute_stats(slice(small_data().train, 0, keep)));
}

TEST(Pipeline, PretrainIsDeterministic) {
  const auto d1 = fresh_dir("scae_pipe_det1"), d2 = fresh_dir("scae_pipe_det2");
  pretrain(small_config(), small_data(), d1);
  pretrain(small_config(), small_data(), d2);
  for (const char* f : {"metrics.csv", "checkpoints/best.scae", "checkpoints/final.scae", "images/heldout.ppm"})
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST(Pipeline, EvaluateIdentityModelGivesNoisePsnr) {
  RunConfig c = small_config();
  c.zero_residual = true;
  c.epochs = 0;
  const auto pre = pretrain(c, small_data());
  c.mode = RunMode::eval_recon;
  // 40 test images of 3x15x15 leave some sampling spread around the closed form.
  const auto r = evaluate(c, small_data(), {}, &pre.final_checkpoint);
  EXPECT_NEAR(r.value, expected_corrupted_psnr(30.0), 0.15);
  EXPECT_EQ(r.record.split, "test");
  c.mode = RunMode::eval_cls;
  EXPECT_THROW(evaluate(c, small_data(), {}, &pre.final_checkpoint), ContractError);
}

TEST(Pipeline, FinetuneZeroEpochs) {
  RunConfig c = small_config();
  c.mode = RunMode::finetune;
  c.epochs = 0;
  const auto r = finetune(c, small_data());
  ASSERT_EQ(r.metrics.size(), 1u);
  EXPECT_EQ(r.metrics[0].split, "test");
  EXPECT_EQ(r.metrics[0].epoch, 0);
  EXPECT_TRUE(r.metrics[0].accuracy.has_value());
}

TEST(Pipeline, FinetuneFreezesEncoder) {
  RunConfig c = small_config();
  const auto pre = pretrain(c, small_data());
  c.mode = RunMode::finetune;
  c.freeze_encoder_epochs = 2;
  const auto frozen = finetune(c, small_data(), {}, &pre.final_checkpoint);
  const NetworkSpec spec = c.network(HeadKind::classifier, 4);
  EXPECT_TRUE(encoder_equal(frozen.final_checkpoint.params, pre.final_checkpoint.params, spec));
  EXPECT_EQ(frozen.final_checkpoint.stats, pre.final_checkpoint.stats);

  c.freeze_encoder_epochs = 1;
  const auto thawed = finetune(c, small_data(), {}, &pre.final_checkpoint);
  EXPECT_FALSE(encoder_equal(thawed.final_checkpoint.params, pre.final_checkpoint.params, spec));

  RunConfig other = c;
  other.width = 6;
  EXPECT_THROW(finetune(other, small_data(), {}, &pre.final_checkpoint), ContractError);
}

TEST(Pipeline, FinetuneIsDeterministic) {
  RunConfig c = small_config();
  c.mode = RunMode::finetune;
  c.label_budget = 40;
  c.corrupt_probability = 0.5;
  const auto d1 = fresh_dir("scae_ft_det1"), d2 = fresh_dir("scae_ft_det2");
  finetune(c, small_data(), d1);
  finetune(c, small_data(), d2);
  EXPECT_EQ(slurp(d1 / "metrics.csv"), slurp(d2 / "metrics.csv"));
  EXPECT_EQ(slurp(d1 / "checkpoints/final.scae"), slurp(d2 / "checkpoints/final.scae"));
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST(Pipeline, ProbesLeaveEncoderUntouched) {
  RunConfig c = small_config();
  const auto pre = pretrain(c, small_data());
  const auto before = encode_checkpoint(pre.final_checkpoint);
  for (RunMode mode : {RunMode::probe_cls, RunMode::probe_recon}) {
    c.mode = mode;
    c.epochs = 1;
    const auto dir = fresh_dir("scae_probe");
    const auto r = probe(c, small_data(), dir, &pre.final_checkpoint);
    EXPECT_EQ(encode_checkpoint(pre.final_checkpoint), before);
    ASSERT_EQ(r.curve.size(), 3u);
    EXPECT_EQ(r.curve[0].layer, "input");
    EXPECT_EQ(r.curve[2].layer, "enc2.relu");
    EXPECT_EQ(r.curve[2].depth, 2);
    const std::string csv = slurp(dir / "probe_curve.csv");
    EXPECT_EQ(csv, format_probe_curve(r.curve, mode));
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              mode == RunMode::probe_cls ? "layer,depth,accuracy,loss,head_parameters"
                                         : "layer,depth,psnr,loss,head_parameters");
    std::filesystem::remove_all(dir);
  }
  c.probe_layers = "enc1.relu";
  c.mode = RunMode::probe_cls;
  EXPECT_EQ(probe(c, small_data(), {}, &pre.final_checkpoint).curve.size(), 1u);
  c.probe_layers = "dec1.relu";
  EXPECT_THROW(probe(c, small_data(), {}, &pre.final_checkpoint), ContractError);
}

TEST(Pipeline, DivergenceAbortsWithLastGood) {
  RunConfig c = small_config();
  c.schedule.base_lr = 1e30;
  c.epochs = 3;
  const auto dir = fresh_dir("scae_pipe_nan");
  EXPECT_THROW(pretrain(c, small_data(), dir), NumericError);
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoints/last_good.scae"));
  std::filesystem::remove_all(dir);
}

TEST(Pipeline, ReconstructAndActivation) {
  RunConfig c = small_config();
  c.zero_residual = true;
  c.epochs = 0;
  const auto pre = pretrain(c, small_data());
  const Tensor raw = center_crop(slice(small_data().test, 0, 3).images, 15, 15);
  EXPECT_TRUE(all_close(reconstruct(pre.final_checkpoint, raw), raw, 0.0, 1e-3));
  EXPECT_EQ(activation(pre.final_checkpoint, raw, "enc2.relu").shape(), Shape({3, 4, 8, 8}));
  EXPECT_THROW(activation(pre.final_checkpoint, raw, "nope"), ContractError);
}
