#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "scae/corruption.hpp"
#include "scae/kv.hpp"
#include "scae/network_spec.hpp"
#include "scae/optim.hpp"

namespace scae {

enum class RunMode { pretrain, finetune, probe_cls, probe_recon, eval_recon, eval_cls };

std::string to_string(RunMode mode);
RunMode parse_mode(std::string_view text);

// Where images come from. `synth` regenerates the shapes corpus from `seed`; the binary
// sources read the published file names below `dir`:
//   cifar10:  data_batch_{1..5}.bin, test_batch.bin
//   cifar100: train.bin, test.bin
//   stl10:    train_X.bin, train_y.bin, test_X.bin, test_y.bin
struct DataConfig {
  std::string source = "synth";
  std::string dir;
  std::size_t synth_train = 2000;
  std::size_t synth_test = 1000;
  int synth_size = 32;
  int synth_classes = 10;
  std::uint64_t seed = 1;

  bool operator==(const DataConfig&) const = default;
};

// Complete description of one run. Every field has a key in the canonical text form, so the
// resolved text alone reproduces the run.
struct RunConfig {
  RunMode mode = RunMode::pretrain;

  // Network: encoder stage layer counts with one shared width; input is crop x crop.
  std::vector<int> stage_counts{2, 2};
  int width = 16;
  int shortcut_spacing = 2;
  bool input_output_shortcut = true;
  std::size_t crop = 29;

  CorruptionSpec noise = CorruptionSpec::gaussian(30.0);
  // Fine-tuning only: probability of corrupting each training image with `noise`.
  double corrupt_probability = 0.0;

  LrSchedule schedule{1e-3, {}};
  int epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool hflip = false;

  std::string init;              // checkpoint path
  std::size_t label_budget = 0;  // 0 = all labels
  int freeze_encoder_epochs = 0;
  bool zero_residual = false;
  // Probe runs: "all" or a comma list of activation names (`input`, `enc<i>.relu`).
  std::string probe_layers = "all";
  // Wall-clock timings make metrics.csv differ between identical runs, so they are opt-in.
  bool record_wall_time = false;

  DataConfig data;

  bool operator==(const RunConfig&) const = default;

  // Network for this run with the given head; input channels come from the data.
  NetworkSpec network(HeadKind head, int num_classes = 0, int channels = 3) const;

  // Throws ContractError naming the offending key.
  void validate() const;

  KeyValues to_key_values() const;
  // Keys absent from `kv` keep the values already in `base`; unknown keys are rejected.
  static RunConfig from_key_values(const KeyValues& kv, RunConfig base);
  static RunConfig from_key_values(const KeyValues& kv);
  std::string to_text() const { return format_key_values(to_key_values()); }
};

// `5,5,5,0` or `m=5,5,5,0`.
std::vector<int> parse_stage_counts(std::string_view text);

}  // namespace scae
