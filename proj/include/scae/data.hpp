#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scae/rng.hpp"
#include "scae/tensor.hpp"

namespace scae {

// Raw images in [0,255] as (N,C,H,W) plus optional labels in [0, num_classes).
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return images.empty() ? 0 : images.shape()[0]; }
  bool labeled() const { return !labels.empty(); }
  Shape image_shape() const;
};

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);
// Images [begin, end).
Dataset slice(const Dataset& data, std::size_t begin, std::size_t end);

// Planar uint8 record layout: `label_bytes` leading label bytes (the label used is the last one),
// then channel-planar pixels.
struct RecordFormat {
  int label_bytes = 1;
  int channels = 3;
  int height = 32;
  int width = 32;
  int num_classes = 10;

  std::size_t record_size() const;
  static RecordFormat cifar10() { return {1, 3, 32, 32, 10}; }
  // Coarse then fine label byte; the fine label is kept.
  static RecordFormat cifar100() { return {2, 3, 32, 32, 100}; }
};

Dataset decode_records(std::span<const std::uint8_t> bytes, const RecordFormat& format, const std::string& origin);
Dataset load_cifar_binary(const std::vector<std::filesystem::path>& paths,
                          const RecordFormat& format = RecordFormat::cifar10());

// STL-10 binary: images stored column-major per channel, 3x96x96; labels file holds bytes 1..10.
Dataset load_stl10(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels);

Dataset concat(const std::vector<Dataset>& parts);

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool operator==(const NormalizationStats&) const = default;
};

// Per-channel mean/std over every pixel of the training split.
NormalizationStats compute_stats(const Dataset& train);

// (x - mean_c) / std_c and its inverse.
Tensor preprocess(const Tensor& raw, const NormalizationStats& stats);
Tensor deprocess(const Tensor& normalized, const NormalizationStats& stats);

enum class CropMode { random, center };

struct BatchPlan {
  std::size_t batch_size = 64;
  std::uint64_t shuffle_seed = 0;
  bool shuffle = true;
  bool hflip = false;
  std::size_t crop_h = 29;
  std::size_t crop_w = 29;
  CropMode crop_mode = CropMode::random;
};

// Crop every image to (crop_h, crop_w) at a random (train) or centered offset
// floor((H - h) / 2), then mirror each image horizontally with probability 1/2 if enabled.
Tensor augment(const Tensor& batch, const BatchPlan& plan, Rng& rng);
Tensor hflip(const Tensor& batch, std::span<const bool> flip_mask);
Tensor crop(const Tensor& batch, std::size_t top, std::size_t left, std::size_t h, std::size_t w);
Tensor center_crop(const Tensor& batch, std::size_t h, std::size_t w);

struct Batch {
  std::size_t index = 0;
  std::vector<std::size_t> indices;
  Tensor raw;         // augmented crop, raw pixel domain
  Tensor normalized;  // preprocess(raw)
  std::vector<int> labels;
};

// Deterministic epoch iterator: order is a Fisher-Yates shuffle keyed by (seed, epoch), and the
// augmentation draw of batch b is keyed by (seed, epoch, b). The last short batch is included.
class BatchIterator {
 public:
  BatchIterator(const Dataset& data, const BatchPlan& plan, const NormalizationStats& stats, int epoch);

  std::optional<Batch> next();
  std::size_t batch_count() const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const Dataset& data_;
  BatchPlan plan_;
  const NormalizationStats& stats_;
  int epoch_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t batch_index_ = 0;
};

// Images of randomly placed geometric shapes on flat backgrounds; the label is the shape type.
// Labels are an exact balanced cycle shuffled by the generator.
Dataset synth_dataset(Rng& rng, std::size_t n, int classes, int size = 32);
inline constexpr int kSynthShapeCount = 10;

// Class-balanced subset of `budget` labelled examples (budget / K per class, remainder to the
// lowest classes), drawn with `rng`; returned indices are sorted.
std::vector<std::size_t> balanced_label_subset(const Dataset& data, std::size_t budget, Rng& rng);

}  // namespace scae
