#include "scae/data.hpp"

#include <algorithm>
#include <cmath>

#include "scae/file_io.hpp"

namespace scae {

Shape Dataset::image_shape() const {
  const auto& s = images.shape();
  return Shape{s[1], s[2], s[3]};
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("subset: empty index list");
  const Shape img = data.image_shape();
  const std::size_t stride = img.numel();
  Tensor images(Shape{indices.size(), img[0], img[1], img[2]});
  Dataset out;
  out.num_classes = data.num_classes;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= data.size()) throw ContractError("subset: index out of range");
    std::copy_n(data.images.data() + indices[i] * stride, stride, images.data() + i * stride);
    if (data.labeled()) out.labels.push_back(data.labels[indices[i]]);
  }
  out.images = std::move(images);
  return out;
}

Dataset slice(const Dataset& data, std::size_t begin, std::size_t end) {
  if (begin >= end || end > data.size()) throw ContractError("slice: invalid range");
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return subset(data, idx);
}

std::size_t RecordFormat::record_size() const {
  return static_cast<std::size_t>(label_bytes) +
         static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
}

Dataset decode_records(std::span<const std::uint8_t> bytes, const RecordFormat& format, const std::string& origin) {
  const std::size_t rec = format.record_size();
  if (bytes.empty() || bytes.size() % rec != 0) {
    throw FormatError(origin + ": size " + std::to_string(bytes.size()) + " is not a positive multiple of the " +
                      std::to_string(rec) + "-byte record");
  }
  const std::size_t n = bytes.size() / rec;
  const std::size_t pixels = rec - static_cast<std::size_t>(format.label_bytes);
  Dataset out;
  out.num_classes = format.num_classes;
  out.images = Tensor(Shape{n, static_cast<std::size_t>(format.channels), static_cast<std::size_t>(format.height),
                            static_cast<std::size_t>(format.width)});
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* r = bytes.data() + i * rec;
    const int label = r[format.label_bytes - 1];
    if (label >= format.num_classes) {
      throw FormatError(origin + ": record " + std::to_string(i) + " has label " + std::to_string(label) +
                        " >= " + std::to_string(format.num_classes));
    }
    out.labels[i] = label;
    float* dst = out.images.data() + i * pixels;
    for (std::size_t k = 0; k < pixels; ++k) dst[k] = static_cast<float>(r[format.label_bytes + k]);
  }
  return out;
}

Dataset concat(const std::vector<Dataset>& parts) {
  if (parts.empty()) throw ContractError("concat: no parts");
  const Shape img = parts.front().image_shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (!(p.image_shape() == img)) throw ContractError("concat: image shapes differ");
    if (p.labeled() != parts.front().labeled()) throw ContractError("concat: mixed labelled/unlabelled parts");
    total += p.size();
  }
  Dataset out;
  out.num_classes = parts.front().num_classes;
  out.images = Tensor(Shape{total, img[0], img[1], img[2]});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy_n(p.images.data(), p.images.size(), out.images.data() + offset);
    offset += p.images.size();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

Dataset load_cifar_binary(const std::vector<std::filesystem::path>& paths, const RecordFormat& format) {
  if (paths.empty()) throw ContractError("load_cifar_binary: no files given");
  std::vector<Dataset> parts;
  for (const auto& p : paths) {
    const auto bytes = read_file(p);
    parts.push_back(decode_records(bytes, format, p.string()));
  }
  return parts.size() == 1 ? std::move(parts.front()) : concat(parts);
}

Dataset load_stl10(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  constexpr std::size_t kSide = 96, kChannels = 3, kPixels = kChannels * kSide * kSide;
  const auto bytes = read_file(images);
  if (bytes.empty() || bytes.size() % kPixels != 0) {
    throw FormatError(images.string() + ": size is not a multiple of the 27648-byte image record");
  }
  const std::size_t n = bytes.size() / kPixels;
  Dataset out;
  out.num_classes = 10;
  out.images = Tensor(Shape{n, kChannels, kSide, kSide});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < kChannels; ++c)
      for (std::size_t col = 0; col < kSide; ++col)
        for (std::size_t row = 0; row < kSide; ++row)
          out.images.at(i, c, row, col) = bytes[i * kPixels + (c * kSide + col) * kSide + row];
  if (labels) {
    const auto lb = read_file(*labels);
    if (lb.size() != n) throw FormatError(labels->string() + ": label count does not match image count");
    for (auto b : lb) {
      if (b < 1 || b > 10) throw FormatError(labels->string() + ": label outside 1..10");
      out.labels.push_back(b - 1);
    }
  }
  return out;
}

NormalizationStats compute_stats(const Dataset& train) {
  NormalizationStats s;
  s.mean = channel_mean(train.images);
  const auto var = channel_variance(train.images);
  for (double v : var) s.stddev.push_back(v > 0.0 ? std::sqrt(v) : 1.0);
  return s;
}

Tensor preprocess(const Tensor& raw, const NormalizationStats& stats) {
  const std::size_t n = raw.shape()[0], c = raw.shape()[1], plane = raw.shape()[2] * raw.shape()[3];
  if (stats.mean.size() != c) throw ContractError("preprocess: statistics do not match channel count");
  Tensor out(raw.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double m = stats.mean[ch], inv = 1.0 / stats.stddev[ch];
      const std::size_t off = (i * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) out[off + k] = static_cast<float>((raw[off + k] - m) * inv);
    }
  return out;
}

Tensor deprocess(const Tensor& normalized, const NormalizationStats& stats) {
  const std::size_t n = normalized.shape()[0], c = normalized.shape()[1];
  const std::size_t plane = normalized.shape()[2] * normalized.shape()[3];
  if (stats.mean.size() != c) throw ContractError("deprocess: statistics do not match channel count");
  Tensor out(normalized.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double m = stats.mean[ch], s = stats.stddev[ch];
      const std::size_t off = (i * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) out[off + k] = static_cast<float>(normalized[off + k] * s + m);
    }
  return out;
}

Tensor crop(const Tensor& batch, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  const std::size_t n = batch.shape()[0], c = batch.shape()[1], H = batch.shape()[2], W = batch.shape()[3];
  if (top + h > H || left + w > W) throw ContractError("crop: window exceeds image");
  Tensor out(Shape{n, c, h, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        std::copy_n(&batch.at(i, ch, top + y, left), w, &out.at(i, ch, y, 0));
  return out;
}

Tensor center_crop(const Tensor& batch, std::size_t h, std::size_t w) {
  const std::size_t H = batch.shape()[2], W = batch.shape()[3];
  if (h > H || w > W) throw ContractError("center_crop: crop larger than image");
  return crop(batch, (H - h) / 2, (W - w) / 2, h, w);
}

Tensor hflip(const Tensor& batch, std::span<const bool> flip_mask) {
  const std::size_t n = batch.shape()[0], c = batch.shape()[1], h = batch.shape()[2], w = batch.shape()[3];
  if (flip_mask.size() != n) throw ContractError("hflip: mask length must equal batch size");
  Tensor out = batch;
  for (std::size_t i = 0; i < n; ++i) {
    if (!flip_mask[i]) continue;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(i, ch, y, x) = batch.at(i, ch, y, w - 1 - x);
  }
  return out;
}

Tensor augment(const Tensor& batch, const BatchPlan& plan, Rng& rng) {
  const std::size_t n = batch.shape()[0], c = batch.shape()[1], H = batch.shape()[2], W = batch.shape()[3];
  if (plan.crop_h > H || plan.crop_w > W) {
    throw ContractError("augment: crop " + std::to_string(plan.crop_h) + "x" + std::to_string(plan.crop_w) +
                        " larger than image " + std::to_string(H) + "x" + std::to_string(W));
  }
  Tensor out(Shape{n, c, plan.crop_h, plan.crop_w});
  std::vector<char> flips(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t top = (H - plan.crop_h) / 2, left = (W - plan.crop_w) / 2;
    if (plan.crop_mode == CropMode::random) {
      top = rng.uniform_int(H - plan.crop_h + 1);
      left = rng.uniform_int(W - plan.crop_w + 1);
    }
    const bool flip = plan.hflip && rng.bernoulli(0.5);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < plan.crop_h; ++y)
        for (std::size_t x = 0; x < plan.crop_w; ++x) {
          const std::size_t sx = flip ? plan.crop_w - 1 - x : x;
          out.at(i, ch, y, x) = batch.at(i, ch, top + y, left + sx);
        }
  }
  return out;
}

BatchIterator::BatchIterator(const Dataset& data, const BatchPlan& plan, const NormalizationStats& stats, int epoch)
    : data_(data), plan_(plan), stats_(stats), epoch_(epoch), order_(data.size()) {
  if (plan.batch_size == 0) throw ContractError("batch_size must be positive");
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (plan.shuffle) {
    Rng rng = Rng(plan.shuffle_seed).fork(1).fork(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.uniform_int(i)]);
  }
}

std::size_t BatchIterator::batch_count() const { return (order_.size() + plan_.batch_size - 1) / plan_.batch_size; }

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + plan_.batch_size);
  Batch b;
  b.index = batch_index_;
  b.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_), order_.begin() + static_cast<std::ptrdiff_t>(end));
  const Dataset picked = subset(data_, b.indices);
  Rng rng = Rng(plan_.shuffle_seed).fork(2).fork(static_cast<std::uint64_t>(epoch_)).fork(batch_index_);
  b.raw = augment(picked.images, plan_, rng);
  b.normalized = preprocess(b.raw, stats_);
  b.labels = picked.labels;
  cursor_ = end;
  ++batch_index_;
  return b;
}

namespace {

bool inside_shape(int shape, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (shape) {
    case 0: return u * u + v * v <= 1.0;                                       // disk
    case 1: return au <= 0.8 && av <= 0.8;                                     // square
    case 2: return v >= -0.9 && v <= 0.8 && au <= 0.9 * (v + 0.9) / 1.7;      // triangle
    case 3: { const double r2 = u * u + v * v; return r2 <= 1.0 && r2 >= 0.36; }  // ring
    case 4: { const double m = std::max(au, av); return m <= 0.85 && m >= 0.5; }  // frame
    case 5: return (au <= 0.3 && av <= 1.0) || (av <= 0.3 && au <= 1.0);      // plus
    case 6: return au <= 0.85 && av <= 0.85 && (std::abs(u - v) <= 0.4 || std::abs(u + v) <= 0.4);  // x
    case 7: return au <= 1.0 && av <= 0.3;                                     // horizontal bar
    case 8: return av <= 1.0 && au <= 0.3;                                     // vertical bar
    case 9: return au + av <= 1.0;                                             // diamond
    default: return false;
  }
}

void render_shape(Tensor& images, std::size_t index, int shape, Rng& rng, int size) {
  const double s = size;
  const double radius = s * (0.2 + 0.15 * rng.uniform());
  const double cx = radius + (s - 2.0 * radius) * rng.uniform();
  const double cy = radius + (s - 2.0 * radius) * rng.uniform();
  double bg[3], fg[3];
  do {
    double diff = 0.0;
    for (int c = 0; c < 3; ++c) {
      bg[c] = 255.0 * rng.uniform();
      fg[c] = 255.0 * rng.uniform();
      diff += std::abs(bg[c] - fg[c]);
    }
    if (diff / 3.0 >= 60.0) break;
  } while (true);

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double px = x + 0.25 + 0.5 * sx, py = y + 0.25 + 0.5 * sy;
          hits += inside_shape(shape, (px - cx) / radius, (py - cy) / radius) ? 1 : 0;
        }
      const double cover = hits / 4.0;
      for (int c = 0; c < 3; ++c) {
        images.at(index, static_cast<std::size_t>(c), static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            static_cast<float>(std::round(bg[c] * (1.0 - cover) + fg[c] * cover));
      }
    }
  }
}

}  // namespace

Dataset synth_dataset(Rng& rng, std::size_t n, int classes, int size) {
  if (classes < 2 || classes > kSynthShapeCount) {
    throw ContractError("synth_dataset: classes must be in [2, " + std::to_string(kSynthShapeCount) + "]");
  }
  if (n == 0 || size < 8) throw ContractError("synth_dataset: need n > 0 and size >= 8");
  Dataset out;
  out.num_classes = classes;
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
  for (std::size_t i = n; i > 1; --i) std::swap(out.labels[i - 1], out.labels[rng.uniform_int(i)]);
  const auto side = static_cast<std::size_t>(size);
  out.images = Tensor(Shape{n, 3, side, side});
  for (std::size_t i = 0; i < n; ++i) render_shape(out.images, i, out.labels[i], rng, size);
  return out;
}

std::vector<std::size_t> balanced_label_subset(const Dataset& data, std::size_t budget, Rng& rng) {
  if (!data.labeled()) throw ContractError("balanced_label_subset: dataset has no labels");
  if (budget == 0 || budget > data.size()) {
    throw ContractError("label_budget " + std::to_string(budget) + " must be in [1, " + std::to_string(data.size()) + "]");
  }
  const auto k = static_cast<std::size_t>(data.num_classes);
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  std::vector<std::size_t> picked;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t want = budget / k + (c < budget % k ? 1 : 0);
    auto& pool = by_class[c];
    if (pool.size() < want) {
      throw ContractError("label_budget: class " + std::to_string(c) + " has only " + std::to_string(pool.size()) +
                          " examples");
    }
    for (std::size_t i = 0; i < want; ++i) std::swap(pool[i], pool[i + rng.uniform_int(pool.size() - i)]);
    picked.insert(picked.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace scae
