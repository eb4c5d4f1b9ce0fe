#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scae/checkpoint.hpp"
#include "scae/data.hpp"
#include "scae/report.hpp"
#include "scae/run_config.hpp"

namespace scae {

struct DataSplits {
  Dataset train;
  Dataset test;
};

DataSplits load_data(const DataConfig& cfg);

// The pretraining held-out split: the last 5% (at least one image) of the training set.
std::size_t heldout_count(std::size_t train_size);

// Every run function writes `metrics.csv`, `checkpoints/` and `images/` below `run_dir` when it
// is non-empty, and returns the same information in memory. `init` overrides `cfg.init`.

struct PretrainResult {
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;
  int best_epoch = 0;
  double best_psnr = 0.0;
  double final_psnr = 0.0;
  double corrupted_psnr = 0.0;  // held-out PSNR of the corrupted inputs themselves
  double initial_loss = 0.0;    // loss of the first training batch, before any update
  std::vector<MetricsRecord> metrics;
};

PretrainResult pretrain(const RunConfig& cfg, const DataSplits& data, const std::filesystem::path& run_dir = {});

struct FinetuneResult {
  Checkpoint final_checkpoint;
  double final_accuracy = 0.0;
  std::vector<MetricsRecord> metrics;
};

FinetuneResult finetune(const RunConfig& cfg, const DataSplits& data, const std::filesystem::path& run_dir = {},
                        const Checkpoint* init = nullptr);

struct ProbePoint {
  std::string layer;
  int depth = 0;  // 0 for the raw input, i for enc<i>.relu
  double value = 0.0;  // test accuracy (cls) or test PSNR (recon)
  double loss = 0.0;
  std::size_t head_parameters = 0;
};

struct ProbeResult {
  std::vector<ProbePoint> curve;
  std::vector<MetricsRecord> metrics;
};

// Trains one head per requested layer on frozen encoder features of the label-budget images.
ProbeResult probe(const RunConfig& cfg, const DataSplits& data, const std::filesystem::path& run_dir = {},
                  const Checkpoint* init = nullptr);
std::string format_probe_curve(const std::vector<ProbePoint>& curve, RunMode mode);

struct EvalResult {
  MetricsRecord record;
  double value = 0.0;  // PSNR (recon) or accuracy (cls)
};

EvalResult evaluate(const RunConfig& cfg, const DataSplits& data, const std::filesystem::path& run_dir = {},
                    const Checkpoint* init = nullptr);

// Inference helpers on raw-domain batches (N,C,H,W) already cropped to the network input.
Tensor reconstruct(const Checkpoint& ckpt, const Tensor& raw);
Tensor activation(const Checkpoint& ckpt, const Tensor& raw, const std::string& layer);

// Activation names a probe may target: `input` followed by the encoder ReLUs.
std::vector<std::string> probe_layer_names(const NetworkSpec& spec);

}  // namespace scae
