#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scae/tensor.hpp"

namespace scae {

// 10 log10(255^2 / mse) in dB over all elements, capped at kPsnrCapDb when
// mse < 255^2 * 10^-9.9.
double psnr(const Tensor& clean, const Tensor& recon);

// Fraction of rows whose argmax equals the label.
double accuracy(const Tensor& logits, const std::vector<int>& labels);

// Binary "P6" for (3,H,W) and "P5" for (1,H,W) raw-domain images; values are clamped to
// [0,255] and rounded half-up.
std::vector<std::uint8_t> encode_pnm(const Tensor& image);
void write_pnm(const Tensor& image, const std::filesystem::path& path);
// Accepts rank-3 images or rank-4 batches of size 1.
Tensor decode_pnm(const std::vector<std::uint8_t>& bytes);

// Grid of equally sized images separated by 2-pixel white gutters. Every image must share the
// channel count and spatial size; rows may not be ragged.
Tensor montage(const std::vector<std::vector<Tensor>>& rows);

// Writes one P5 file per channel of `activation` (shape (C,H,W) or (1,C,H,W)), min-max scaled to
// [0,255] per channel (constant channels render as 128), plus `index.tsv` with
// one `channel<TAB>filename` line per channel. Returns the written file names in channel order.
std::vector<std::string> dump_feature_maps(const Tensor& activation, const std::filesystem::path& out_dir,
                                           const std::string& prefix);

// One line of metrics.csv. Absent values render as empty fields.
struct MetricsRecord {
  int epoch = 0;
  std::string split;
  std::optional<double> loss;
  std::optional<double> psnr;
  std::optional<double> accuracy;
  std::optional<double> lr;
  std::optional<double> wall_seconds;

  bool operator==(const MetricsRecord&) const = default;
};

inline constexpr const char* kMetricsHeader = "epoch,split,loss,psnr,accuracy,lr,wall_seconds";

// %.6g rendering of every number.
std::string format_metric(double v);
std::string format_metrics_row(const MetricsRecord& r);

// Appends rows to a CSV file, writing the header when the file is created. Rejects
// non-finite metrics.
class MetricsWriter {
 public:
  explicit MetricsWriter(std::filesystem::path path);
  void write(const MetricsRecord& r);
  const std::vector<MetricsRecord>& records() const { return records_; }

 private:
  std::filesystem::path path_;
  std::vector<MetricsRecord> records_;
};

}  // namespace scae
