#include "scae/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "scae/file_io.hpp"
#include "scae/corruption.hpp"

namespace scae {

double psnr(const Tensor& clean, const Tensor& recon) {
  const double err = mse(clean, recon);
  if (err < 255.0 * 255.0 * std::pow(10.0, -9.9)) return kPsnrCapDb;
  return 10.0 * std::log10(255.0 * 255.0 / err);
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
  const auto pred = argmax_rows(logits);
  if (pred.size() != labels.size()) throw ContractError("accuracy: label count does not match logits");
  if (labels.empty()) throw ContractError("accuracy: empty batch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

namespace {

std::uint8_t to_byte(float v) {
  if (!(v > 0.0f)) return 0;  // also maps NaN to 0
  if (v >= 255.0f) return 255;
  return static_cast<std::uint8_t>(std::floor(static_cast<double>(v) + 0.5));
}

Tensor as_image(const Tensor& t) {
  if (t.shape().rank() == 4 && t.shape()[0] == 1) return t.reshaped(Shape{t.shape()[1], t.shape()[2], t.shape()[3]});
  if (t.shape().rank() != 3) throw ContractError("image must be (C,H,W), got " + t.shape().str());
  return t;
}

}  // namespace

std::vector<std::uint8_t> encode_pnm(const Tensor& input) {
  const Tensor image = as_image(input);
  const std::size_t c = image.shape()[0], h = image.shape()[1], w = image.shape()[2];
  if (c != 1 && c != 3) throw ContractError("PNM output needs 1 or 3 channels, got " + std::to_string(c));
  const std::string header = std::string(c == 3 ? "P6" : "P5") + "\n" + std::to_string(w) + " " + std::to_string(h) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + c * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) out.push_back(to_byte(image[(ch * h + y) * w + x]));
  return out;
}

void write_pnm(const Tensor& image, const std::filesystem::path& path) { write_file(path, encode_pnm(image)); }

Tensor decode_pnm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  const auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    if (t.empty()) throw FormatError("PNM header truncated");
    return t;
  };
  const std::string magic = token();
  if (magic != "P6" && magic != "P5") throw FormatError("unsupported PNM magic '" + magic + "'");
  const std::size_t c = magic == "P6" ? 3 : 1;
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::logic_error&) {
    throw FormatError("PNM header is not numeric");
  }
  if (maxval != 255 || w == 0 || h == 0) throw FormatError("PNM: only 8-bit non-empty images are supported");
  ++pos;  // single whitespace after maxval
  if (bytes.size() != pos + c * h * w) throw FormatError("PNM payload size mismatch");
  Tensor out(Shape{c, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) out[(ch * h + y) * w + x] = bytes[pos++];
  return out;
}

Tensor montage(const std::vector<std::vector<Tensor>>& rows) {
  if (rows.empty() || rows[0].empty()) throw ContractError("montage: no images");
  const Tensor first = as_image(rows[0][0]);
  const std::size_t c = first.shape()[0], h = first.shape()[1], w = first.shape()[2];
  const std::size_t cols = rows[0].size();
  const std::size_t H = rows.size() * (h + 2) - 2, W = cols * (w + 2) - 2;
  Tensor out = full<float>(Shape{c, H, W}, 255.0f);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw ContractError("montage: ragged rows");
    for (std::size_t k = 0; k < cols; ++k) {
      const Tensor img = as_image(rows[r][k]);
      if (!(img.shape() == first.shape())) throw ContractError("montage: image shapes differ");
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            out[(ch * H + r * (h + 2) + y) * W + k * (w + 2) + x] = img[(ch * h + y) * w + x];
    }
  }
  return out;
}

std::vector<std::string> dump_feature_maps(const Tensor& activation, const std::filesystem::path& out_dir,
                                           const std::string& prefix) {
  const Tensor a = as_image(activation);
  const std::size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> names;
  std::string index;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* p = a.data() + ch * h * w;
    const auto [lo, hi] = std::minmax_element(p, p + h * w);
    Tensor img(Shape{1, h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
      img[i] = *hi == *lo ? 128.0f
                          : static_cast<float>(255.0 * (static_cast<double>(p[i]) - *lo) /
                                               (static_cast<double>(*hi) - *lo));
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "_c%04zu.pgm", ch);
    const std::string name = prefix + buf;
    write_pnm(img, out_dir / name);
    names.push_back(name);
    index += std::to_string(ch) + "\t" + name + "\n";
  }
  std::ofstream idx(out_dir / "index.tsv", std::ios::binary | std::ios::trunc);
  if (!idx) throw IoError("cannot write '" + (out_dir / "index.tsv").string() + "'");
  idx << index;
  return names;
}

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string format_metrics_row(const MetricsRecord& r) {
  const auto field = [](const std::optional<double>& v) { return v ? format_metric(*v) : std::string(); };
  return std::to_string(r.epoch) + "," + r.split + "," + field(r.loss) + "," + field(r.psnr) + "," +
         field(r.accuracy) + "," + field(r.lr) + "," + field(r.wall_seconds);
}

MetricsWriter::MetricsWriter(std::filesystem::path path) : path_(std::move(path)) {
  const bool fresh = !std::filesystem::exists(path_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot write '" + path_.string() + "'");
  if (fresh) out << kMetricsHeader << "\n";
}

void MetricsWriter::write(const MetricsRecord& r) {
  for (const auto& v : {r.loss, r.psnr, r.accuracy, r.lr, r.wall_seconds}) {
    if (v && !std::isfinite(*v)) throw NumericError("non-finite metric at epoch " + std::to_string(r.epoch));
  }
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot write '" + path_.string() + "'");
  out << format_metrics_row(r) << "\n";
  records_.push_back(r);
}

}  // namespace scae
