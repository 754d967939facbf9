// svae: train, sample, evaluate and benchmark spatial VAEs.
//
// Exit codes: 0 success, 1 failed check, 2 usage / config / I/O error,
// 3 training aborted on a non-finite loss or gradient.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "svae/checkpoint.hpp"
#include "svae/data.hpp"
#include "svae/errors.hpp"
#include "svae/image_io.hpp"
#include "svae/model.hpp"
#include "svae/parzen.hpp"
#include "svae/run_config.hpp"
#include "svae/selfcheck.hpp"
#include "svae/train.hpp"

namespace fs = std::filesystem;
using namespace svae;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

constexpr std::uint64_t kInitStream = 0x494e4954ULL;
constexpr std::uint64_t kPreviewStream = 0x50524556ULL;

struct Flags {
  std::string config_path;
  std::map<std::string, std::string> raw;
  std::map<std::string, CLI::Option*> options;
};

void add_config_flags(CLI::App& cmd, Flags& flags) {
  cmd.add_option("--config", flags.config_path, "flat key = value config file");
  for (const auto& key : config_keys()) {
    RunConfig defaults;
    flags.options[key.name] =
        cmd.add_option("--" + key.name, flags.raw[key.name], key.help + " [" + defaults.get(key.name) + "]");
  }
}

RunConfig resolve(const Flags& flags) {
  std::map<std::string, std::string> file;
  if (!flags.config_path.empty()) file = read_config_file(flags.config_path);
  std::map<std::string, std::string> given;
  for (const auto& [name, opt] : flags.options) {
    if (opt->count() > 0) given[name] = flags.raw.at(name);
  }
  return resolve_config(file, given);
}

Dataset load_split(const RunConfig& cfg, Split split) {
  Dataset ds;
  switch (cfg.dataset) {
    case DatasetKind::mnist: ds = load_mnist_dir(cfg.data_dir, split); break;
    case DatasetKind::cifar10: ds = load_cifar10(cfg.data_dir, split); break;
    case DatasetKind::folder: {
      Dataset all = load_image_folder(cfg.data_dir, cfg.image_size);
      // Last ceil(10%) is held out as the test split; a single image serves both.
      const std::size_t n = all.size();
      const std::size_t held = n > 1 ? validation_split(all).size() : 0;
      if (held == 0) ds = all;
      else ds = split == Split::train ? all.slice(0, n - held) : all.slice(n - held, held);
      ds.split = split;
      break;
    }
  }
  const std::size_t limit = split == Split::train ? cfg.limit : cfg.test_limit;
  if (limit > 0 && limit < ds.size()) ds = ds.slice(0, limit);
  ds.validate();
  return ds;
}

ModelConfig model_config(const RunConfig& cfg) {
  ModelConfig mc;
  switch (cfg.dataset) {
    case DatasetKind::mnist: mc = mnist_config(cfg.variant, cfg.d, cfg.n_maps, cfg.latent_dim); break;
    case DatasetKind::cifar10:
      mc = cifar10_config(cfg.variant, cfg.d, cfg.n_maps, cfg.latent_dim);
      break;
    case DatasetKind::folder:
      if (cfg.image_size != 64) throw ConfigError("folder datasets use image-size 64");
      mc = folder_config(cfg.variant, cfg.d, cfg.n_maps, cfg.latent_dim);
      break;
  }
  mc.likelihood_sigma = cfg.likelihood_sigma;
  mc.decoder_hidden = cfg.decoder_hidden;
  mc.validate();
  return mc;
}

Tensor flatten_points(const Dataset& ds) {
  const std::size_t n = ds.size();
  return Tensor(Shape{n, ds.images.numel() / n}, ds.images.values());
}

std::string grid_name(const char* prefix, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.png", prefix, index);
  return buf;
}

// Tiles up to rows x rows images; a short final batch keeps the column count.
void save_grid(const Tensor& images, std::size_t rows, const fs::path& path) {
  const std::size_t n = images.dim(0);
  save_png_grid(images, std::max<std::size_t>(1, (n + rows - 1) / rows), path);
}

class LineLog {
 public:
  LineLog(const fs::path& path, bool append)
      : f_(path, append ? std::ios::app : std::ios::trunc), path_(path) {
    if (!f_) throw IoError("cannot write " + path.string());
  }
  void write(const json& record) {
    f_ << record.dump() << '\n';
    f_.flush();
    if (!f_) throw IoError("failed writing " + path_.string());
  }

 private:
  std::ofstream f_;
  fs::path path_;
};

int cmd_train(const RunConfig& cfg) {
  const Dataset data = load_split(cfg, Split::train);
  const TrainConfig tc = cfg.train_config();
  tc.validate();
  if (cfg.rows == 0) throw ConfigError("rows must be > 0");
  fs::create_directories(cfg.out);

  std::optional<Checkpoint> resumed;
  if (!cfg.resume.empty()) resumed = read_checkpoint(cfg.resume);
  Model model = resumed ? model_from_checkpoint(*resumed) : Model(model_config(cfg), mix_seed(cfg.seed, kInitStream));
  Trainer trainer(model, tc);
  if (resumed) trainer.restore(*resumed);

  const auto& mc = model.config();
  LineLog run_log(cfg.out / "run.log", resumed.has_value());
  LineLog timing_log(cfg.out / "timing.log", resumed.has_value());

  json start;
  start["event"] = resumed ? "resume" : "start";
  start["variant"] = to_string(mc.variant);
  start["dataset"] = to_string(cfg.dataset);
  start["d"] = mc.d;
  start["n_maps"] = mc.n_maps;
  start["latent_dim"] = mc.latent_size();
  start["head_width"] = mc.head_width();
  start["encoder_parameters"] = model.encoder_parameter_count();
  start["decoder_parameters"] = model.decoder_parameter_count();
  start["n_train"] = data.size();
  start["epochs"] = tc.epochs;
  start["batch_size"] = tc.batch_size;
  start["learning_rate"] = tc.learning_rate;
  start["seed"] = tc.seed;
  run_log.write(start);
  std::cout << "variant=" << to_string(mc.variant) << " head_width=" << mc.head_width()
            << " encoder_parameters=" << model.encoder_parameter_count()
            << " decoder_parameters=" << model.decoder_parameter_count()
            << " n_train=" << data.size() << std::endl;

  TrainHooks hooks;
  hooks.checkpoint_dir = cfg.out;
  hooks.on_epoch = [&](const EpochReport& r, const Trainer& t) {
    json rec;
    rec["event"] = "epoch";
    rec["epoch"] = r.epoch;
    rec["step"] = t.global_step();
    rec["mean_elbo"] = r.mean_elbo;
    rec["mean_recon"] = r.mean_recon;
    rec["mean_kl"] = r.mean_kl;
    run_log.write(rec);
    timing_log.write({{"event", "epoch"}, {"epoch", r.epoch}, {"wall_seconds", r.wall_seconds}});

    Rng rng(mix_seed(cfg.seed, kPreviewStream));
    save_grid(model.generate(cfg.rows * cfg.rows, rng), cfg.rows,
              cfg.out / grid_name("samples_epoch", r.epoch));
    std::printf("epoch %zu  elbo %.4f  recon %.4f  kl %.4f  (%.2fs)\n", r.epoch, r.mean_elbo,
                r.mean_recon, r.mean_kl, r.wall_seconds);
    std::fflush(stdout);
  };

  try {
    train(trainer, data, hooks);
  } catch (const NumericError& e) {
    run_log.write({{"event", "abort"}, {"step", trainer.global_step()}, {"reason", e.what()}});
    std::cerr << "error: training aborted: " << e.what() << "\n"
              << "last good parameters written to " << (cfg.out / "svae_last_good.ckpt").string()
              << "\n";
    return kExitNumeric;
  }
  run_log.write({{"event", "done"}, {"step", trainer.global_step()}, {"checkpoint", "svae_final.ckpt"}});
  std::cout << "wrote " << (cfg.out / "svae_final.ckpt").string() << std::endl;
  return kExitOk;
}

int cmd_generate(const RunConfig& cfg) {
  if (cfg.rows == 0 || cfg.count == 0) throw ConfigError("count and rows must be > 0");
  const Model model = model_from_checkpoint(read_checkpoint(cfg.checkpoint));
  fs::create_directories(cfg.out);
  Rng rng(cfg.seed);
  const std::size_t per_grid = cfg.rows * cfg.rows;
  double seconds = 0.0;
  for (std::size_t done = 0, index = 0; done < cfg.count; done += per_grid, ++index) {
    const std::size_t n = std::min(per_grid, cfg.count - done);
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor images = model.generate(n, rng);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_grid(images, cfg.rows, cfg.out / grid_name("generated", index));
  }
  TimingRecord r;
  r.event = "generate";
  r.variant = to_string(model.config().variant);
  r.head_width = model.config().head_width();
  r.encoder_parameters = model.encoder_parameter_count();
  r.decoder_parameters = model.decoder_parameter_count();
  r.n_generate = cfg.count;
  r.generate_seconds = seconds;
  std::cout << to_json(r) << std::endl;
  return kExitOk;
}

int cmd_eval_parzen(const RunConfig& cfg) {
  const Model model = model_from_checkpoint(read_checkpoint(cfg.checkpoint));
  const Dataset train_set = load_split(cfg, Split::train);
  const Dataset test_set = load_split(cfg, Split::test);
  const Dataset valid = validation_split(train_set);
  const ParzenConfig pc = cfg.parzen_config();
  const ParzenReport report = evaluate_parzen(model, flatten_points(valid), flatten_points(test_set), pc);
  fs::create_directories(cfg.out);
  LineLog(cfg.out / "run.log", true).write(json::parse(to_json(report)));
  std::cout << to_json(report) << std::endl;
  return kExitOk;
}

int cmd_bench(const RunConfig& cfg) {
  const Dataset data = load_split(cfg, Split::train);
  std::vector<Model> models;
  for (auto v : kAllVariants) {
    RunConfig c = cfg;
    c.variant = v;
    models.emplace_back(model_config(c), mix_seed(cfg.seed, kInitStream));
  }
  BenchConfig bc;
  bc.n_generate = cfg.n_generate;
  bc.train = cfg.train_config();
  const auto records = bench(models, data, bc);

  fs::create_directories(cfg.out);
  std::ofstream jsonl(cfg.out / "bench.jsonl", std::ios::trunc);
  if (!jsonl) throw IoError("cannot write " + (cfg.out / "bench.jsonl").string());
  std::printf("%-12s %10s %12s %12s %14s %14s\n", "variant", "head", "encoder", "decoder",
              "epoch_s", "generate_s");
  for (const auto& r : records) {
    std::printf("%-12s %10zu %12zu %12zu %14.4f %14.4f\n", r.variant.c_str(), r.head_width,
                r.encoder_parameters, r.decoder_parameters, r.train_epoch_seconds,
                r.generate_seconds);
    jsonl << to_json(r) << '\n';
  }
  double lo = records[0].generate_seconds, hi = lo;
  for (const auto& r : records) lo = std::min(lo, r.generate_seconds), hi = std::max(hi, r.generate_seconds);
  std::printf("generation spread (max - min) / min: %.2f%%\n", 100.0 * (hi - lo) / lo);
  for (const auto& r : records) std::cout << to_json(r) << '\n';
  return kExitOk;
}

int cmd_check(const std::string& fault, std::uint64_t seed) {
  SelfCheckOptions opts;
  opts.inject_fault = fault;
  opts.seed = seed;
  const auto results = run_self_check(opts);
  std::cout << format_suite_table(results);
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << results.size() << " suites, " << failed << " failed" << std::endl;
  return failed ? kExitCheckFailed : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial VAEs with matrix-variate normal latents"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* cmd;
    Flags flags;
  };
  std::map<std::string, Sub> subs;
  const std::pair<const char*, const char*> commands[] = {
      {"train", "train a model and write checkpoints, run.log and sample grids"},
      {"generate", "decode prior samples from a checkpoint into PNG grids"},
      {"eval-parzen", "Parzen-window log-likelihood of the test split"},
      {"bench", "time one training epoch and generation for every variant"},
      {"check", "run the built-in oracle suites"}};
  for (const auto& [name, help] : commands) {
    auto& s = subs[name];
    s.cmd = app.add_subcommand(name, help);
    if (std::string(name) != "check") add_config_flags(*s.cmd, s.flags);
  }
  std::string fault;
  std::uint64_t check_seed = 1;
  subs["check"].cmd->add_option("--inject-fault", fault, "corrupt one suite (debugging the checker)");
  subs["check"].cmd->add_option("--seed", check_seed, "seed for the randomized suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (subs["check"].cmd->parsed()) return cmd_check(fault, check_seed);
    for (auto& [name, s] : subs) {
      if (!s.cmd->parsed()) continue;
      const RunConfig cfg = resolve(s.flags);
      if (name == "train") return cmd_train(cfg);
      if (name == "generate") return cmd_generate(cfg);
      if (name == "eval-parzen") return cmd_eval_parzen(cfg);
      if (name == "bench") return cmd_bench(cfg);
    }
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitUsage;
}
