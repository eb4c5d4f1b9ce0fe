#include "scae/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iomanip>
#include <string>
#include <vector>

#include "scae/checkpoint.hpp"
#include "scae/file_io.hpp"
#include "scae/network.hpp"
#include "scae/pipeline.hpp"
#include "scae/rng.hpp"

namespace scae::cli {

namespace {

namespace fs = std::filesystem;

// Flag value plus the config key it maps to; only flags given on the command line override.
struct KeyFlag {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

struct RunFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::string out;
  std::vector<KeyFlag> keyed;
  CLI::Option* source = nullptr;
};

// Registers the options after the vector is complete so the bound strings stay put.
void bind_key_flags(CLI::App* app, RunFlags& f, const std::vector<std::pair<std::string, std::string>>& spec) {
  f.keyed.reserve(spec.size());
  for (const auto& [flag, key] : spec) f.keyed.push_back({key, "", nullptr});
  for (std::size_t i = 0; i < spec.size(); ++i) {
    f.keyed[i].option = app->add_option(spec[i].first, f.keyed[i].value, "sets config key '" + spec[i].second + "'");
    if (spec[i].second == "data.source") f.source = f.keyed[i].option;
  }
}

void add_common(CLI::App* app, RunFlags& f, const std::vector<std::pair<std::string, std::string>>& extra) {
  app->add_option("--config", f.config_file, "key=value config file; flags override its keys")->check(CLI::ExistingFile);
  app->add_option("--set", f.sets, "override any config key, as key=value (repeatable)");
  app->add_option("--out", f.out, "run directory to create (must be absent or empty)")->required();
  std::vector<std::pair<std::string, std::string>> spec{
      {"--data", "data.dir"},        {"--dataset", "data.source"},     {"--data-seed", "data.seed"},
      {"--synth-train", "data.synth_train"}, {"--synth-test", "data.synth_test"},
      {"--net", "net"},               {"--width", "width"},             {"--shortcut-spacing", "shortcut_spacing"},
      {"--io-shortcut", "input_output_shortcut"}, {"--crop", "crop"}, {"--noise", "noise"},
      {"--seed", "seed"},             {"--batch-size", "batch_size"},
  };
  spec.insert(spec.end(), extra.begin(), extra.end());
  bind_key_flags(app, f, spec);
}

const std::vector<std::pair<std::string, std::string>> kTrainFlags{
    {"--epochs", "epochs"}, {"--lr", "lr"}, {"--milestones", "milestones"}, {"--hflip", "hflip"},
    {"--record-wall-time", "record_wall_time"}};

// config file < flags < --set
RunConfig resolve(const RunFlags& f, RunMode mode) {
  KeyValues kv;
  if (!f.config_file.empty()) {
    const auto bytes = read_file(f.config_file);
    kv = parse_key_values(std::string(bytes.begin(), bytes.end()));
  }
  for (const auto& k : f.keyed)
    if (k.option && k.option->count() > 0) kv[k.key] = k.value;
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ContractError("set: expected key=value, got '" + s + "'");
    kv[std::string(trim(s.substr(0, eq)))] = std::string(trim(s.substr(eq + 1)));
  }
  kv["mode"] = to_string(mode);
  // A data directory without an explicit source means CIFAR-10.
  if (kv.contains("data.dir") && !kv["data.dir"].empty() && !kv.contains("data.source")) kv["data.source"] = "cifar10";
  RunConfig cfg = RunConfig::from_key_values(kv);
  cfg.validate();
  return cfg;
}

fs::path create_run_dir(const std::string& out, const RunConfig* cfg) {
  const fs::path dir(out);
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ContractError("out: '" + out + "' exists and is not a directory");
    if (!fs::is_empty(dir)) throw ContractError("out: run directory '" + out + "' is not empty");
  }
  fs::create_directories(dir / "checkpoints");
  fs::create_directories(dir / "images");
  if (cfg) write_text(dir / "config.resolved", cfg->to_text());
  return dir;
}

void print_checkpoint(const Checkpoint& c, std::ostream& out) {
  out << "# network\n" << c.spec.to_text();
  out << "# tensors\n";
  for (const auto& e : c.params.entries()) {
    out << e.name << '\t' << e.value.shape().str() << "\tf32\t" << (e.trainable ? "param" : "buffer") << '\n';
  }
  out << "# parameters " << c.params.element_count() << " trainable, " << c.params.element_count(true) << " total\n";
  if (c.stats) {
    out << "# normalization\n";
    for (std::size_t i = 0; i < c.stats->mean.size(); ++i) {
      out << "channel " << i << "\tmean " << format_double(c.stats->mean[i]) << "\tstd "
          << format_double(c.stats->stddev[i]) << '\n';
    }
  }
  if (c.optimizer) {
    out << "# optimizer adam step " << c.optimizer->step << ", " << c.optimizer->m.size() << " moment pairs\n";
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Denoising auto-encoder training toolkit", "scae"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  RunFlags pre, fine, prb, evl, prev, dump;
  std::string probe_task = "cls", eval_task = "recon";
  std::size_t preview_count = 8, dump_index = 0;
  std::string dump_layer, inspect_path;

  auto* c_pre = app.add_subcommand("pretrain", "denoising pre-training of the auto-encoder");
  add_common(c_pre, pre, [] {
    auto v = kTrainFlags;
    v.push_back({"--zero-residual", "zero_residual"});
    return v;
  }());

  auto* c_fine = app.add_subcommand("finetune", "supervised training of the classifier");
  add_common(c_fine, fine, [] {
    auto v = kTrainFlags;
    v.insert(v.end(), {{"--init", "init"}, {"--label-budget", "label_budget"},
                       {"--freeze-epochs", "freeze_encoder_epochs"}, {"--corrupt-prob", "corrupt_probability"}});
    return v;
  }());

  auto* c_probe = app.add_subcommand("probe", "per-layer probes on a frozen encoder");
  add_common(c_probe, prb, [] {
    auto v = kTrainFlags;
    v.insert(v.end(), {{"--init", "init"}, {"--label-budget", "label_budget"}, {"--layers", "probe_layers"}});
    return v;
  }());
  c_probe->add_option("--task", probe_task, "cls or recon")->check(CLI::IsMember({"cls", "recon"}));

  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(c_eval, evl, {{"--init", "init"}});
  c_eval->add_option("--task", eval_task, "recon or cls")->check(CLI::IsMember({"cls", "recon"}));

  auto* c_prev = app.add_subcommand("corrupt-preview", "montage of clean / corrupted (/ reconstructed) images");
  add_common(c_prev, prev, {{"--init", "init"}});
  c_prev->add_option("--count", preview_count, "number of test images")->check(CLI::Range(1, 64));

  auto* c_dump = app.add_subcommand("dump-features", "write one grayscale image per channel of an activation");
  add_common(c_dump, dump, {{"--init", "init"}});
  c_dump->add_option("--layer", dump_layer, "activation name, e.g. enc3.relu")->required();
  c_dump->add_option("--index", dump_index, "test image index");

  auto* c_inspect = app.add_subcommand("inspect-checkpoint", "print the network description and tensor table of a checkpoint");
  c_inspect->add_option("path", inspect_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();  // renders the invoked subcommand's help when there is one
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (c_inspect->parsed()) {
      print_checkpoint(load_checkpoint(inspect_path), out);
      return kExitOk;
    }
    if (c_pre->parsed()) {
      const RunConfig cfg = resolve(pre, RunMode::pretrain);
      const auto data = load_data(cfg.data);
      const auto dir = create_run_dir(pre.out, &cfg);
      const auto r = pretrain(cfg, data, dir);
      out << "held-out PSNR " << format_metric(r.final_psnr) << " dB (best " << format_metric(r.best_psnr)
          << " dB at epoch " << r.best_epoch << ", corrupted input " << format_metric(r.corrupted_psnr) << " dB)\n";
      return kExitOk;
    }
    if (c_fine->parsed()) {
      const RunConfig cfg = resolve(fine, RunMode::finetune);
      const auto data = load_data(cfg.data);
      const auto dir = create_run_dir(fine.out, &cfg);
      const auto r = finetune(cfg, data, dir);
      out << "test accuracy " << format_metric(r.final_accuracy) << "\n";
      return kExitOk;
    }
    if (c_probe->parsed()) {
      const RunConfig cfg = resolve(prb, probe_task == "cls" ? RunMode::probe_cls : RunMode::probe_recon);
      const auto data = load_data(cfg.data);
      const auto dir = create_run_dir(prb.out, &cfg);
      const auto r = probe(cfg, data, dir);
      out << format_probe_curve(r.curve, cfg.mode);
      return kExitOk;
    }
    if (c_eval->parsed()) {
      const RunConfig cfg = resolve(evl, eval_task == "cls" ? RunMode::eval_cls : RunMode::eval_recon);
      const auto data = load_data(cfg.data);
      const auto dir = create_run_dir(evl.out, &cfg);
      const auto r = evaluate(cfg, data, dir);
      out << (cfg.mode == RunMode::eval_cls ? "test accuracy " : "test PSNR ") << format_metric(r.value) << "\n";
      return kExitOk;
    }
    if (c_prev->parsed()) {
      const RunConfig cfg = resolve(prev, RunMode::pretrain);
      const auto data = load_data(cfg.data);
      std::optional<Checkpoint> ckpt;
      if (!cfg.init.empty()) ckpt = load_checkpoint(cfg.init);
      const std::size_t crop = ckpt ? static_cast<std::size_t>(ckpt->spec.in_height) : cfg.crop;
      const std::size_t n = std::min(preview_count, data.test.size());
      const Tensor clean = center_crop(slice(data.test, 0, n).images, crop, crop);
      Rng rng(cfg.seed);
      const Tensor noisy = corrupt(clean, cfg.noise, rng).noisy;
      const Tensor recon = ckpt ? reconstruct(*ckpt, noisy) : Tensor();
      const auto one = [](const Tensor& t, std::size_t i) {
        const std::size_t per = t.size() / t.shape()[0];
        Tensor img(Shape{t.shape()[1], t.shape()[2], t.shape()[3]});
        std::copy_n(t.data() + i * per, per, img.data());
        return img;
      };
      std::vector<std::vector<Tensor>> grid;
      for (std::size_t i = 0; i < n; ++i) {
        grid.push_back({one(clean, i), one(noisy, i)});
        if (ckpt) grid.back().push_back(one(recon, i));
      }
      const auto dir = create_run_dir(prev.out, &cfg);
      write_pnm(montage(grid), dir / "images" / "preview.ppm");
      out << "PSNR of corrupted images " << format_metric(psnr(clean, noisy)) << " dB";
      if (ckpt) out << ", reconstructed " << format_metric(psnr(clean, recon)) << " dB";
      out << "\n";
      return kExitOk;
    }
    if (c_dump->parsed()) {
      const RunConfig cfg = resolve(dump, RunMode::pretrain);
      if (cfg.init.empty()) throw ContractError("init: dump-features needs a checkpoint");
      const auto data = load_data(cfg.data);
      const Checkpoint ckpt = load_checkpoint(cfg.init);
      if (dump_index >= data.test.size()) throw ContractError("index: out of range");
      const std::size_t crop = static_cast<std::size_t>(ckpt.spec.in_height);
      const Tensor image = center_crop(slice(data.test, dump_index, dump_index + 1).images, crop, crop);
      const Tensor act = activation(ckpt, image, dump_layer);
      if (act.shape().rank() != 4) throw ContractError("layer: '" + dump_layer + "' is not a spatial activation");
      const auto dir = create_run_dir(dump.out, &cfg);
      const auto files = dump_feature_maps(act, dir / "images" / dump_layer, dump_layer);
      out << "wrote " << files.size() << " channel images to " << (dir / "images" / dump_layer).string() << "\n";
      return kExitOk;
    }
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace scae::cli
