#include "scae/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "scae/corruption.hpp"
#include "scae/file_io.hpp"
#include "scae/network.hpp"
#include "scae/nn_ops.hpp"
#include "scae/rng.hpp"

namespace scae {

namespace {

// Independent random streams derived from the run seed.
constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kEvalNoiseStream = 12;
constexpr std::uint64_t kLabelStream = 13;
constexpr std::uint64_t kProbeStream = 14;
constexpr std::uint64_t kSynthTestStream = 15;

constexpr std::size_t kEvalChunk = 128;

namespace fs = std::filesystem;

class Clock {
 public:
  explicit Clock(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  std::optional<double> elapsed() const {
    if (!enabled_) return std::nullopt;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

// Metrics go both to memory and, when a run directory is set, to metrics.csv.
class MetricsSink {
 public:
  explicit MetricsSink(const fs::path& run_dir) {
    if (!run_dir.empty()) writer_.emplace(run_dir / "metrics.csv");
  }
  void emit(const MetricsRecord& r) {
    if (writer_) {
      writer_->write(r);
    } else {
      for (const auto& v : {r.loss, r.psnr, r.accuracy, r.lr})
        if (v && !std::isfinite(*v)) throw NumericError("non-finite metric at epoch " + std::to_string(r.epoch));
    }
    records.push_back(r);
  }
  std::vector<MetricsRecord> records;

 private:
  std::optional<MetricsWriter> writer_;
};

void prepare_run_dir(const fs::path& run_dir) {
  if (run_dir.empty()) return;
  fs::create_directories(run_dir / "checkpoints");
  fs::create_directories(run_dir / "images");
}

void save_if(const fs::path& run_dir, const std::string& name, const Checkpoint& ckpt) {
  if (!run_dir.empty()) save_checkpoint(ckpt, run_dir / "checkpoints" / name);
}

std::optional<Checkpoint> resolve_init(const RunConfig& cfg, const Checkpoint* init) {
  if (init) return *init;
  if (cfg.init.empty()) return std::nullopt;
  return load_checkpoint(cfg.init);
}

Shape with_batch(std::size_t n, const Shape& sample) {
  std::vector<std::size_t> dims{n};
  for (auto d : sample.dims()) dims.push_back(d);
  return Shape(std::span<const std::size_t>(dims));
}

Shape sample_shape(const Shape& batched) {
  return Shape(std::span<const std::size_t>(batched.dims().subspan(1)));
}

// Rows [begin, end) of a batch-major tensor.
Tensor rows(const Tensor& t, std::size_t begin, std::size_t end) {
  const std::size_t per = t.size() / t.shape()[0];
  Tensor out(with_batch(end - begin, sample_shape(t.shape())));
  std::copy(t.data() + begin * per, t.data() + end * per, out.data());
  return out;
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx) {
  const std::size_t per = t.size() / t.shape()[0];
  Tensor out(with_batch(idx.size(), sample_shape(t.shape())));
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(t.data() + idx[i] * per, per, out.data() + i * per);
  return out;
}

// Activation `name` for every row of `input`, evaluated in infer mode in fixed-size chunks.
Tensor infer_batched(const Graph& graph, ParameterStore<float>& params, const Tensor& input, const std::string& name) {
  const std::size_t n = input.shape()[0];
  Tensor out(with_batch(n, graph.shape_of(name)));
  const std::size_t per = out.size() / n;
  for (std::size_t b = 0; b < n; b += kEvalChunk) {
    const std::size_t e = std::min(n, b + kEvalChunk);
    const auto fwd = forward(graph, params, rows(input, b, e), BnMode::infer);
    const auto& a = fwd.at(name);
    std::copy(a.data(), a.data() + a.size(), out.data() + b * per);
  }
  return out;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
  return order;
}

void require_mode(const RunConfig& cfg, std::initializer_list<RunMode> modes, const char* what) {
  for (auto m : modes)
    if (cfg.mode == m) return;
  throw ContractError(std::string("mode: ") + to_string(cfg.mode) + " cannot run " + what);
}

int channels_of(const DataSplits& data) { return static_cast<int>(data.train.images.shape()[1]); }

void require_images(const DataSplits& data, std::size_t crop) {
  if (data.train.size() == 0) throw ContractError("data: empty training split");
  const auto& s = data.train.images.shape();
  if (s[2] < crop || s[3] < crop) {
    throw ContractError("crop: " + std::to_string(crop) + " exceeds image size " + std::to_string(s[2]) + "x" +
                        std::to_string(s[3]));
  }
}

// Held-out (clean, corrupted) raw pairs with a fixed corruption draw, shared by every epoch.
struct ReconEvalSet {
  Tensor clean;
  Tensor noisy;
};

ReconEvalSet make_recon_eval_set(const Dataset& images, const RunConfig& cfg, std::size_t crop) {
  ReconEvalSet s;
  s.clean = center_crop(images.images, crop, crop);
  Rng rng = Rng(cfg.seed).fork(kEvalNoiseStream);
  s.noisy = corrupt(s.clean, cfg.noise, rng).noisy;
  return s;
}

struct ReconScore {
  double loss = 0.0;  // MSE in the normalized domain
  double psnr = 0.0;  // raw pixel domain
  Tensor recon;
};

ReconScore score_recon(const Graph& graph, ParameterStore<float>& params, const ReconEvalSet& set,
                       const NormalizationStats& stats) {
  const Tensor out = infer_batched(graph, params, preprocess(set.noisy, stats), graph.output_name());
  ReconScore r;
  r.loss = mse(out, preprocess(set.clean, stats));
  r.recon = deprocess(out, stats);
  r.psnr = psnr(set.clean, r.recon);
  return r;
}

struct ClsScore {
  double loss = 0.0;
  double accuracy = 0.0;
};

ClsScore score_cls(const Graph& graph, ParameterStore<float>& params, const Tensor& normalized,
                   const std::vector<int>& labels) {
  const Tensor logits = infer_batched(graph, params, normalized, graph.output_name());
  return {softmax_cross_entropy(logits, labels).loss, accuracy(logits, labels)};
}

void write_recon_montage(const fs::path& run_dir, const ReconEvalSet& set, const Tensor& recon) {
  if (run_dir.empty()) return;
  const std::size_t n = std::min<std::size_t>(4, set.clean.shape()[0]);
  std::vector<std::vector<Tensor>> grid;
  for (std::size_t i = 0; i < n; ++i) {
    grid.push_back({rows(set.clean, i, i + 1), rows(set.noisy, i, i + 1), rows(recon, i, i + 1)});
  }
  write_pnm(montage(grid), run_dir / "images" / "heldout.ppm");
}

[[noreturn]] void abort_run(const fs::path& run_dir, const Checkpoint& last_good, const std::string& why) {
  save_if(run_dir, "last_good.scae", last_good);
  throw NumericError(why + (run_dir.empty() ? "" : "; last good parameters saved to checkpoints/last_good.scae"));
}

}  // namespace

DataSplits load_data(const DataConfig& cfg) {
  DataSplits d;
  const fs::path dir = cfg.dir;
  if (cfg.source == "synth") {
    Rng rng(cfg.seed);
    d.train = synth_dataset(rng, cfg.synth_train, cfg.synth_classes, cfg.synth_size);
    Rng test_rng = Rng(cfg.seed).fork(kSynthTestStream);
    d.test = synth_dataset(test_rng, cfg.synth_test, cfg.synth_classes, cfg.synth_size);
  } else if (cfg.source == "cifar10") {
    std::vector<fs::path> train;
    for (int i = 1; i <= 5; ++i) train.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    d.train = load_cifar_binary(train, RecordFormat::cifar10());
    d.test = load_cifar_binary({dir / "test_batch.bin"}, RecordFormat::cifar10());
  } else if (cfg.source == "cifar100") {
    d.train = load_cifar_binary({dir / "train.bin"}, RecordFormat::cifar100());
    d.test = load_cifar_binary({dir / "test.bin"}, RecordFormat::cifar100());
  } else if (cfg.source == "stl10") {
    d.train = load_stl10(dir / "train_X.bin", dir / "train_y.bin");
    d.test = load_stl10(dir / "test_X.bin", dir / "test_y.bin");
  } else {
    throw ContractError("data.source: unknown value '" + cfg.source + "'");
  }
  return d;
}

std::size_t heldout_count(std::size_t train_size) {
  if (train_size < 2) throw ContractError("pretraining needs at least two training images");
  return std::max<std::size_t>(1, train_size / 20);
}

std::vector<std::string> probe_layer_names(const NetworkSpec& spec) {
  std::vector<std::string> names{"input"};
  for (const auto& g : spec.encoder_layers()) names.push_back("enc" + std::to_string(g.index) + ".relu");
  return names;
}

// ---------------------------------------------------------------------------------------------

PretrainResult pretrain(const RunConfig& cfg, const DataSplits& data, const fs::path& run_dir) {
  require_mode(cfg, {RunMode::pretrain}, "pretraining");
  cfg.validate();
  require_images(data, cfg.crop);
  prepare_run_dir(run_dir);
  const Clock clock(cfg.record_wall_time);
  MetricsSink sink(run_dir);

  const std::size_t n = data.train.size();
  const std::size_t held = heldout_count(n);
  const Dataset train = slice(data.train, 0, n - held);
  const Dataset heldout = slice(data.train, n - held, n);
  const NormalizationStats stats = compute_stats(train);

  const NetworkSpec spec = cfg.network(HeadKind::autoencoder, 0, channels_of(data));
  Rng init_rng = Rng(cfg.seed).fork(kInitStream);
  AutoencoderOptions opts;
  opts.zero_residual = cfg.zero_residual;
  Network<float> net = build_autoencoder<float>(spec, init_rng, opts);
  AdamState<float> adam;

  const ReconEvalSet eval_set = make_recon_eval_set(heldout, cfg, cfg.crop);
  PretrainResult result;
  result.corrupted_psnr = psnr(eval_set.clean, eval_set.noisy);

  const auto snapshot = [&] { return Checkpoint{spec, net.params, stats, adam}; };

  ReconScore score = score_recon(net.graph, net.params, eval_set, stats);
  sink.emit({0, "heldout", score.loss, score.psnr, std::nullopt, std::nullopt, clock.elapsed()});
  result.best_checkpoint = snapshot();
  result.best_psnr = score.psnr;
  result.final_psnr = score.psnr;

  BatchPlan plan;
  plan.batch_size = cfg.batch_size;
  plan.shuffle_seed = cfg.seed;
  plan.hflip = cfg.hflip;
  plan.crop_h = plan.crop_w = cfg.crop;
  plan.crop_mode = CropMode::random;

  bool first = true;
  std::uint64_t global_batch = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.schedule.lr_at(epoch - 1);
    BatchIterator it(train, plan, stats, epoch - 1);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    while (auto batch = it.next()) {
      Rng noise_rng(corruption_seed(cfg.seed, global_batch++));
      const Tensor input = preprocess(corrupt(batch->raw, cfg.noise, noise_rng).noisy, stats);
      const auto fwd = forward(net.graph, net.params, input, BnMode::train);
      const auto lg = mse_loss(fwd.output(), batch->normalized);
      if (first) result.initial_loss = lg.loss;
      first = false;
      if (!std::isfinite(lg.loss)) abort_run(run_dir, snapshot(), "non-finite loss at epoch " + std::to_string(epoch));
      const auto grads = backward(net.graph, net.params, fwd, lg.grad);
      try {
        adam_step(adam, net.params, grads.params, lr);
      } catch (const NumericError& e) {
        abort_run(run_dir, snapshot(), std::string(e.what()) + " at epoch " + std::to_string(epoch));
      }
      loss_sum += lg.loss * static_cast<double>(batch->indices.size());
      seen += batch->indices.size();
    }
    sink.emit({epoch, "train", loss_sum / static_cast<double>(seen), std::nullopt, std::nullopt, lr, clock.elapsed()});
    score = score_recon(net.graph, net.params, eval_set, stats);
    if (!std::isfinite(score.psnr) || !std::isfinite(score.loss)) {
      abort_run(run_dir, result.best_checkpoint, "non-finite held-out metric at epoch " + std::to_string(epoch));
    }
    sink.emit({epoch, "heldout", score.loss, score.psnr, std::nullopt, lr, clock.elapsed()});
    result.final_psnr = score.psnr;
    if (score.psnr > result.best_psnr) {
      result.best_psnr = score.psnr;
      result.best_epoch = epoch;
      result.best_checkpoint = snapshot();
    }
  }

  result.final_checkpoint = snapshot();
  save_if(run_dir, "final.scae", result.final_checkpoint);
  save_if(run_dir, "best.scae", result.best_checkpoint);
  write_recon_montage(run_dir, eval_set, score.recon);
  result.metrics = std::move(sink.records);
  return result;
}

// ---------------------------------------------------------------------------------------------

FinetuneResult finetune(const RunConfig& cfg, const DataSplits& data, const fs::path& run_dir, const Checkpoint* init) {
  require_mode(cfg, {RunMode::finetune}, "fine-tuning");
  cfg.validate();
  require_images(data, cfg.crop);
  if (!data.train.labeled() || !data.test.labeled()) throw ContractError("data: fine-tuning needs labels");
  const auto ckpt = resolve_init(cfg, init);
  const int classes = data.train.num_classes;
  const NetworkSpec spec = cfg.network(HeadKind::classifier, classes, channels_of(data));
  if (ckpt && !(ckpt->spec.with_head(HeadKind::none) == spec.with_head(HeadKind::none))) {
    throw ContractError("init: checkpoint encoder does not match the configured network");
  }
  if (cfg.label_budget > data.train.size()) throw ContractError("label_budget: exceeds the training set size");
  prepare_run_dir(run_dir);
  const Clock clock(cfg.record_wall_time);
  MetricsSink sink(run_dir);

  const NormalizationStats stats = ckpt && ckpt->stats ? *ckpt->stats : compute_stats(data.train);
  Dataset labeled = data.train;
  if (cfg.label_budget > 0) {
    Rng label_rng = Rng(cfg.seed).fork(kLabelStream);
    labeled = subset(data.train, balanced_label_subset(data.train, cfg.label_budget, label_rng));
  }
  const Tensor test_x = preprocess(center_crop(data.test.images, cfg.crop, cfg.crop), stats);

  Rng init_rng = Rng(cfg.seed).fork(kInitStream);
  Network<float> net = build_classifier<float>(spec, init_rng, ckpt ? &ckpt->params : nullptr);
  AdamState<float> adam;
  const FreezeSet encoder = encoder_freeze_set(spec);

  CorruptionSpec noise = cfg.noise;
  noise.apply_probability = cfg.corrupt_probability;
  const bool corrupting = cfg.corrupt_probability > 0.0 && noise.kind != CorruptionKind::none;

  BatchPlan plan;
  plan.batch_size = cfg.batch_size;
  plan.shuffle_seed = cfg.seed;
  plan.hflip = cfg.hflip;
  plan.crop_h = plan.crop_w = cfg.crop;
  plan.crop_mode = CropMode::random;

  const auto snapshot = [&] { return Checkpoint{spec, net.params, stats, adam}; };
  FinetuneResult result;
  if (cfg.epochs == 0) {
    const auto s = score_cls(net.graph, net.params, test_x, data.test.labels);
    sink.emit({0, "test", s.loss, std::nullopt, s.accuracy, std::nullopt, clock.elapsed()});
    result.final_accuracy = s.accuracy;
  }

  std::uint64_t global_batch = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.schedule.lr_at(epoch - 1);
    const FreezeSet frozen = epoch - 1 < cfg.freeze_encoder_epochs ? encoder : FreezeSet{};
    BatchIterator it(labeled, plan, stats, epoch - 1);
    double loss_sum = 0.0;
    std::size_t seen = 0, hits = 0;
    while (auto batch = it.next()) {
      Tensor input;
      if (corrupting) {
        Rng noise_rng(corruption_seed(cfg.seed, global_batch));
        input = preprocess(corrupt(batch->raw, noise, noise_rng).noisy, stats);
      } else {
        input = std::move(batch->normalized);
      }
      ++global_batch;
      const auto fwd = forward(net.graph, net.params, input, BnMode::train, frozen);
      const auto lg = softmax_cross_entropy(fwd.output(), batch->labels);
      if (!std::isfinite(lg.loss)) abort_run(run_dir, snapshot(), "non-finite loss at epoch " + std::to_string(epoch));
      BackwardOptions bo;
      bo.frozen = frozen;
      const auto grads = backward(net.graph, net.params, fwd, lg.grad, bo);
      try {
        adam_step(adam, net.params, grads.params, lr, frozen);
      } catch (const NumericError& e) {
        abort_run(run_dir, snapshot(), std::string(e.what()) + " at epoch " + std::to_string(epoch));
      }
      const auto pred = argmax_rows(fwd.output());
      for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == batch->labels[i];
      loss_sum += lg.loss * static_cast<double>(pred.size());
      seen += pred.size();
    }
    const double denom = static_cast<double>(seen);
    sink.emit({epoch, "train", loss_sum / denom, std::nullopt, static_cast<double>(hits) / denom, lr, clock.elapsed()});
    const auto s = score_cls(net.graph, net.params, test_x, data.test.labels);
    sink.emit({epoch, "test", s.loss, std::nullopt, s.accuracy, lr, clock.elapsed()});
    result.final_accuracy = s.accuracy;
  }

  result.final_checkpoint = snapshot();
  save_if(run_dir, "final.scae", result.final_checkpoint);
  result.metrics = std::move(sink.records);
  return result;
}

// ---------------------------------------------------------------------------------------------

namespace {

struct ProbeTask {
  const Graph* graph;
  Tensor train_x, test_x;
  // Classification targets.
  std::vector<int> train_labels, test_labels;
  // Reconstruction targets (normalized) and the raw clean test crops.
  Tensor train_target, test_target, test_clean;
};

// Trains the head and returns (test loss, test metric).
std::pair<double, double> train_probe(const RunConfig& cfg, const ProbeTask& task, ParameterStore<float>& params,
                                      Rng rng, bool classify, const NormalizationStats& stats) {
  const Graph& g = *task.graph;
  AdamState<float> adam;
  const std::size_t n = task.train_x.shape()[0];
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.schedule.lr_at(epoch);
    const auto order = shuffled(n, rng.fork(static_cast<std::uint64_t>(epoch)));
    for (std::size_t b = 0; b < n; b += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(n, b + cfg.batch_size) - b);
      const auto fwd = forward(g, params, gather_rows(task.train_x, idx), BnMode::train);
      LossAndGrad<float> lg;
      if (classify) {
        std::vector<int> labels;
        for (auto i : idx) labels.push_back(task.train_labels[i]);
        lg = softmax_cross_entropy(fwd.output(), labels);
      } else {
        lg = mse_loss(fwd.output(), gather_rows(task.train_target, idx));
      }
      if (!std::isfinite(lg.loss)) throw NumericError("probe: non-finite loss at epoch " + std::to_string(epoch + 1));
      adam_step(adam, params, backward(g, params, fwd, lg.grad).params, lr);
    }
  }
  if (classify) {
    const auto s = score_cls(g, params, task.test_x, task.test_labels);
    return {s.loss, s.accuracy};
  }
  const Tensor out = infer_batched(g, params, task.test_x, g.output_name());
  return {mse(out, task.test_target), psnr(task.test_clean, deprocess(out, stats))};
}

std::size_t stride2_layers_through(const NetworkSpec& spec, int depth) {
  std::size_t d = 0;
  for (const auto& g : spec.encoder_layers())
    if (g.index <= depth && g.stride == 2) ++d;
  return d;
}

std::size_t channels_at(const NetworkSpec& spec, int depth) {
  if (depth == 0) return static_cast<std::size_t>(spec.in_channels);
  return spec.encoder_layers()[static_cast<std::size_t>(depth - 1)].out_channels;
}

}  // namespace

ProbeResult probe(const RunConfig& cfg, const DataSplits& data, const fs::path& run_dir, const Checkpoint* init) {
  require_mode(cfg, {RunMode::probe_cls, RunMode::probe_recon}, "a probe");
  cfg.validate();
  const bool classify = cfg.mode == RunMode::probe_cls;
  const auto ckpt = resolve_init(cfg, init);
  if (!ckpt) throw ContractError("init: a checkpoint is required for probes");
  const NetworkSpec& spec = ckpt->spec;
  const std::size_t crop = static_cast<std::size_t>(spec.in_height);
  if (spec.in_height != spec.in_width || crop != cfg.crop) {
    throw ContractError("crop: configured " + std::to_string(cfg.crop) + " but the checkpoint expects " +
                        std::to_string(spec.in_height) + "x" + std::to_string(spec.in_width));
  }
  require_images(data, crop);
  if (classify && (!data.train.labeled() || !data.test.labeled())) throw ContractError("data: probes need labels");
  if (cfg.label_budget > data.train.size()) throw ContractError("label_budget: exceeds the training set size");

  std::vector<std::string> layers = probe_layer_names(spec);
  if (cfg.probe_layers != "all") {
    const auto known = layers;
    layers.clear();
    for (const auto& raw : split(cfg.probe_layers, ',')) {
      const std::string name(trim(raw));
      if (std::find(known.begin(), known.end(), name) == known.end()) {
        throw ContractError("probe_layers: unknown layer '" + name + "'");
      }
      layers.push_back(name);
    }
  }
  prepare_run_dir(run_dir);
  MetricsSink sink(run_dir);

  const NormalizationStats stats = ckpt->stats ? *ckpt->stats : compute_stats(data.train);
  Dataset labeled = data.train;
  if (cfg.label_budget > 0) {
    Rng label_rng = Rng(cfg.seed).fork(kLabelStream);
    labeled = data.train.labeled() ? subset(data.train, balanced_label_subset(data.train, cfg.label_budget, label_rng))
                                   : slice(data.train, 0, cfg.label_budget);
  }
  const Tensor train_clean = center_crop(labeled.images, crop, crop);
  const Tensor test_clean = center_crop(data.test.images, crop, crop);
  const Tensor train_norm = preprocess(train_clean, stats);
  const Tensor test_norm = preprocess(test_clean, stats);

  Network<float> encoder = extract_encoder(spec, ckpt->params);
  const Shape target = sample_shape(train_norm.shape());

  // Reconstruction heads are sized so none exceeds the head on the shallowest ReLU layer at
  // the network width.
  const auto depth_of = [&](int layer_depth) {
    return std::max<std::size_t>(2, stride2_layers_through(spec, layer_depth) + 1);
  };
  const std::size_t out_c = target[0];
  const std::size_t budget = probe_reconstructor_size(channels_at(spec, 1), out_c, depth_of(1),
                                                      static_cast<std::size_t>(spec.stages.front().width));

  ProbeResult result;
  for (const auto& layer : layers) {
    const int depth = layer == "input" ? 0 : std::stoi(layer.substr(3));
    ProbeTask task;
    task.train_x = layer == "input" ? train_norm : infer_batched(encoder.graph, encoder.params, train_norm, layer);
    task.test_x = layer == "input" ? test_norm : infer_batched(encoder.graph, encoder.params, test_norm, layer);
    const Shape feature = sample_shape(task.train_x.shape());

    Graph head = [&] {
      if (classify) return build_probe_classifier(feature, static_cast<std::size_t>(data.train.num_classes));
      const std::size_t d = depth_of(depth);
      std::size_t w = 1;
      while (probe_reconstructor_size(feature[0], out_c, d, w + 1) <= budget) ++w;
      return build_probe_reconstructor(feature, target, stride2_layers_through(spec, depth), d, w);
    }();
    task.graph = &head;
    if (classify) {
      task.train_labels = labeled.labels;
      task.test_labels = data.test.labels;
    } else {
      task.train_target = train_norm;
      task.test_target = test_norm;
      task.test_clean = test_clean;
    }
    Rng head_rng = Rng(cfg.seed).fork(kProbeStream).fork(static_cast<std::uint64_t>(depth));
    auto params = head.init_parameters<float>(head_rng, kInitStd);
    const auto [loss, value] = train_probe(cfg, task, params, head_rng.fork(1), classify, stats);

    ProbePoint p{layer, depth, value, loss, params.element_count()};
    MetricsRecord r{cfg.epochs, "probe:" + layer, loss, std::nullopt, std::nullopt, std::nullopt, std::nullopt};
    (classify ? r.accuracy : r.psnr) = value;
    sink.emit(r);
    result.curve.push_back(p);
  }
  if (!run_dir.empty()) write_text(run_dir / "probe_curve.csv", format_probe_curve(result.curve, cfg.mode));
  result.metrics = std::move(sink.records);
  return result;
}

std::string format_probe_curve(const std::vector<ProbePoint>& curve, RunMode mode) {
  const std::string metric = mode == RunMode::probe_cls ? "accuracy" : "psnr";
  std::string out = "layer,depth," + metric + ",loss,head_parameters\n";
  for (const auto& p : curve) {
    out += p.layer + "," + std::to_string(p.depth) + "," + format_metric(p.value) + "," + format_metric(p.loss) + "," +
           std::to_string(p.head_parameters) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------------------------

EvalResult evaluate(const RunConfig& cfg, const DataSplits& data, const fs::path& run_dir, const Checkpoint* init) {
  require_mode(cfg, {RunMode::eval_recon, RunMode::eval_cls}, "an evaluation");
  cfg.validate();
  const auto ckpt = resolve_init(cfg, init);
  if (!ckpt) throw ContractError("init: a checkpoint is required for evaluation");
  const std::size_t crop = static_cast<std::size_t>(ckpt->spec.in_height);
  if (data.test.size() == 0) throw ContractError("data: empty test split");
  prepare_run_dir(run_dir);
  MetricsSink sink(run_dir);

  const NormalizationStats stats = ckpt->stats ? *ckpt->stats : compute_stats(data.train);
  Graph graph = build_graph(ckpt->spec);
  ParameterStore<float> params = ckpt->params;
  EvalResult result;
  if (cfg.mode == RunMode::eval_recon) {
    if (ckpt->spec.head != HeadKind::autoencoder) throw ContractError("init: recon evaluation needs an autoencoder");
    const ReconEvalSet set = make_recon_eval_set(data.test, cfg, crop);
    const ReconScore s = score_recon(graph, params, set, stats);
    result.record = {0, "test", s.loss, s.psnr, std::nullopt, std::nullopt, std::nullopt};
    result.value = s.psnr;
    write_recon_montage(run_dir, set, s.recon);
  } else {
    if (ckpt->spec.head != HeadKind::classifier) throw ContractError("init: cls evaluation needs a classifier");
    if (!data.test.labeled()) throw ContractError("data: cls evaluation needs labels");
    const Tensor x = preprocess(center_crop(data.test.images, crop, crop), stats);
    const ClsScore s = score_cls(graph, params, x, data.test.labels);
    result.record = {0, "test", s.loss, std::nullopt, s.accuracy, std::nullopt, std::nullopt};
    result.value = s.accuracy;
  }
  sink.emit(result.record);
  return result;
}

Tensor reconstruct(const Checkpoint& ckpt, const Tensor& raw) {
  if (ckpt.spec.head != HeadKind::autoencoder) throw ContractError("reconstruct: checkpoint is not an autoencoder");
  if (!ckpt.stats) throw ContractError("reconstruct: checkpoint has no normalization statistics");
  const Graph graph = build_graph(ckpt.spec);
  ParameterStore<float> params = ckpt.params;
  return deprocess(infer_batched(graph, params, preprocess(raw, *ckpt.stats), graph.output_name()), *ckpt.stats);
}

Tensor activation(const Checkpoint& ckpt, const Tensor& raw, const std::string& layer) {
  if (!ckpt.stats) throw ContractError("activation: checkpoint has no normalization statistics");
  const Graph graph = build_graph(ckpt.spec);
  if (!graph.has_activation(layer)) throw ContractError("layer: unknown activation '" + layer + "'");
  ParameterStore<float> params = ckpt.params;
  return infer_batched(graph, params, preprocess(raw, *ckpt.stats), layer);
}

}  // namespace scae
