#include "scae/run_config.hpp"

#include <set>

#include "scae/data.hpp"

namespace scae {

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::pretrain: return "pretrain";
    case RunMode::finetune: return "finetune";
    case RunMode::probe_cls: return "probe_cls";
    case RunMode::probe_recon: return "probe_recon";
    case RunMode::eval_recon: return "eval_recon";
    case RunMode::eval_cls: return "eval_cls";
  }
  return "pretrain";
}

RunMode parse_mode(std::string_view text) {
  for (auto m : {RunMode::pretrain, RunMode::finetune, RunMode::probe_cls, RunMode::probe_recon, RunMode::eval_recon,
                 RunMode::eval_cls}) {
    if (to_string(m) == text) return m;
  }
  throw ContractError("mode: unknown value '" + std::string(text) + "'");
}

std::vector<int> parse_stage_counts(std::string_view text) {
  text = trim(text);
  if (text.substr(0, 2) == "m=") text.remove_prefix(2);
  std::vector<int> out;
  for (const auto& f : split(text, ',')) {
    const long v = parse_int(f, "net");
    if (v < 0 || v > 1000) throw ContractError("net: stage layer counts must lie in [0, 1000]");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

NetworkSpec RunConfig::network(HeadKind head, int num_classes, int channels) const {
  NetworkSpec spec = spec_from_stage_counts(stage_counts, width, channels, static_cast<int>(crop), static_cast<int>(crop));
  spec.shortcut_spacing = shortcut_spacing;
  spec.input_output_shortcut = input_output_shortcut;
  return spec.with_head(head, num_classes);
}

void RunConfig::validate() const {
  if (stage_counts.empty()) throw ContractError("net: at least one stage is required");
  if (width < 1) throw ContractError("width: must be >= 1");
  if (shortcut_spacing < 0) throw ContractError("shortcut_spacing: must be >= 0");
  if (crop < 3) throw ContractError("crop: must be >= 3");
  if (epochs < 0) throw ContractError("epochs: must be >= 0");
  if (batch_size < 1) throw ContractError("batch_size: must be >= 1");
  if (!(corrupt_probability >= 0.0 && corrupt_probability <= 1.0)) {
    throw ContractError("corrupt_probability: must lie in [0, 1]");
  }
  if (freeze_encoder_epochs < 0) throw ContractError("freeze_encoder_epochs: must be >= 0");
  try {
    schedule.validate();
  } catch (const ContractError& e) {
    throw ContractError(std::string("lr/milestones: ") + e.what());
  }
  try {
    const int side = static_cast<int>(crop);
    noise.resolved(side, side).validate(side, side);
  } catch (const ContractError& e) {
    throw ContractError(std::string("noise: ") + e.what());
  }
  try {
    network(HeadKind::autoencoder).validate();
  } catch (const ContractError& e) {
    throw ContractError(std::string("net: ") + e.what());
  }
  static const std::set<std::string> sources{"synth", "cifar10", "cifar100", "stl10"};
  if (!sources.contains(data.source)) throw ContractError("data.source: unknown value '" + data.source + "'");
  if (data.source != "synth" && data.dir.empty()) throw ContractError("data.dir: required for source " + data.source);
  if (data.source == "synth") {
    if (data.synth_train < 2 || data.synth_test < 1) throw ContractError("data.synth_train/test: too small");
    if (data.synth_size < static_cast<int>(crop)) throw ContractError("data.synth_size: smaller than crop");
    if (data.synth_classes < 2 || data.synth_classes > kSynthShapeCount) {
      throw ContractError("data.synth_classes: must lie in [2, " + std::to_string(kSynthShapeCount) + "]");
    }
  }
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv;
  kv["mode"] = to_string(mode);
  std::string m;
  for (std::size_t i = 0; i < stage_counts.size(); ++i) m += (i ? "," : "") + std::to_string(stage_counts[i]);
  kv["net"] = m;
  kv["width"] = std::to_string(width);
  kv["shortcut_spacing"] = std::to_string(shortcut_spacing);
  kv["input_output_shortcut"] = input_output_shortcut ? "true" : "false";
  kv["crop"] = std::to_string(crop);
  kv["noise"] = noise.to_text();
  kv["corrupt_probability"] = format_double(corrupt_probability);
  kv["lr"] = format_double(schedule.base_lr);
  kv["milestones"] = schedule.milestones_text();
  kv["epochs"] = std::to_string(epochs);
  kv["batch_size"] = std::to_string(batch_size);
  kv["seed"] = std::to_string(seed);
  kv["hflip"] = hflip ? "true" : "false";
  kv["init"] = init;
  kv["label_budget"] = std::to_string(label_budget);
  kv["freeze_encoder_epochs"] = std::to_string(freeze_encoder_epochs);
  kv["zero_residual"] = zero_residual ? "true" : "false";
  kv["probe_layers"] = probe_layers;
  kv["record_wall_time"] = record_wall_time ? "true" : "false";
  kv["data.source"] = data.source;
  kv["data.dir"] = data.dir;
  kv["data.synth_train"] = std::to_string(data.synth_train);
  kv["data.synth_test"] = std::to_string(data.synth_test);
  kv["data.synth_size"] = std::to_string(data.synth_size);
  kv["data.synth_classes"] = std::to_string(data.synth_classes);
  kv["data.seed"] = std::to_string(data.seed);
  return kv;
}

namespace {

std::size_t parse_count(const std::string& v, const std::string& key) {
  const long n = parse_int(v, key);
  if (n < 0) throw ContractError(key + ": must be >= 0");
  return static_cast<std::size_t>(n);
}

std::uint64_t parse_seed(const std::string& v, const std::string& key) {
  const auto t = trim(v);
  std::uint64_t out = 0;
  if (t.empty()) throw ContractError(key + ": expected an unsigned integer");
  for (char ch : t) {
    if (ch < '0' || ch > '9') throw ContractError(key + ": expected an unsigned integer, got '" + v + "'");
    const std::uint64_t digit = static_cast<std::uint64_t>(ch - '0');
    if (out > (UINT64_MAX - digit) / 10) throw ContractError(key + ": value out of range");
    out = out * 10 + digit;
  }
  return out;
}

}  // namespace

RunConfig RunConfig::from_key_values(const KeyValues& kv, RunConfig c) {
  for (const auto& [key, value] : kv) {
    const auto wrap = [&](auto&& fn) {
      try {
        fn();
      } catch (const ContractError& e) {
        const std::string msg = e.what();
        if (msg.rfind(key, 0) == 0) throw;
        throw ContractError(key + ": " + msg);
      }
    };
    wrap([&] {
      if (key == "mode") c.mode = parse_mode(value);
      else if (key == "net") c.stage_counts = parse_stage_counts(value);
      else if (key == "width") c.width = static_cast<int>(parse_int(value, key));
      else if (key == "shortcut_spacing") c.shortcut_spacing = static_cast<int>(parse_int(value, key));
      else if (key == "input_output_shortcut") c.input_output_shortcut = parse_bool(value, key);
      else if (key == "crop") c.crop = parse_count(value, key);
      else if (key == "noise") c.noise = CorruptionSpec::parse(value);
      else if (key == "corrupt_probability") c.corrupt_probability = parse_double(value, key);
      else if (key == "lr") c.schedule.base_lr = parse_double(value, key);
      else if (key == "milestones") c.schedule.milestones = LrSchedule::parse_milestones(value);
      else if (key == "epochs") c.epochs = static_cast<int>(parse_int(value, key));
      else if (key == "batch_size") c.batch_size = parse_count(value, key);
      else if (key == "seed") c.seed = parse_seed(value, key);
      else if (key == "hflip") c.hflip = parse_bool(value, key);
      else if (key == "init") c.init = std::string(trim(value));
      else if (key == "label_budget") c.label_budget = parse_count(value, key);
      else if (key == "freeze_encoder_epochs") c.freeze_encoder_epochs = static_cast<int>(parse_int(value, key));
      else if (key == "zero_residual") c.zero_residual = parse_bool(value, key);
      else if (key == "probe_layers") c.probe_layers = std::string(trim(value));
      else if (key == "record_wall_time") c.record_wall_time = parse_bool(value, key);
      else if (key == "data.source") c.data.source = std::string(trim(value));
      else if (key == "data.dir") c.data.dir = std::string(trim(value));
      else if (key == "data.synth_train") c.data.synth_train = parse_count(value, key);
      else if (key == "data.synth_test") c.data.synth_test = parse_count(value, key);
      else if (key == "data.synth_size") c.data.synth_size = static_cast<int>(parse_int(value, key));
      else if (key == "data.synth_classes") c.data.synth_classes = static_cast<int>(parse_int(value, key));
      else if (key == "data.seed") c.data.seed = parse_seed(value, key);
      else throw ContractError(key + ": unknown configuration key");
    });
  }
  return c;
}

}  // namespace scae

namespace scae {

RunConfig RunConfig::from_key_values(const KeyValues& kv) { return from_key_values(kv, RunConfig{}); }

}  // namespace scae
