#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "svae/checkpoint.hpp"
#include "svae/data.hpp"
#include "svae/model.hpp"

namespace svae {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  // Write svae_epoch_NNNN.ckpt every this many epochs; 0 disables.
  std::size_t checkpoint_every = 0;

  // Throws ContractError unless lr > 0, 0 <= betas < 1, eps > 0, batch > 0.
  void validate() const;
  std::map<std::string, std::string> to_kv() const;
};

// Epoch means over the training batches. mean_elbo = mean_recon - mean_kl.
struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double mean_elbo = 0.0;
  double mean_recon = 0.0;
  double mean_kl = 0.0;
  // Forward + backward + update only; batch assembly is excluded.
  double wall_seconds = 0.0;
};

// First and second moments per parameter tensor, plus the step count t.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update. `grads[i]` pairs with `params[i]`; state
// buffers are allocated on the first call. Every gradient is checked before
// anything is written, so a NumericError leaves params and state untouched.
void adam_step(std::vector<Tensor>& params, const std::vector<std::span<const double>>& grads,
               AdamState& state, const TrainConfig& cfg);

// Owns the optimizer state for one model. The random stream for step t is a
// pure function of (seed, t) and the batch order of epoch e a pure function
// of (seed, e), so a run restored from a checkpoint continues exactly as an
// uninterrupted one.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg);

  // Maximizes the single-draw ELBO on one batch (descends on -ELBO).
  ElboBreakdown step(const Tensor& batch);
  // One pass over `data` in seeded order, dropping the final partial batch.
  EpochReport run_epoch(const Dataset& data);

  std::uint64_t global_step() const { return adam_.step; }
  std::size_t epochs_done() const { return epochs_done_; }
  const TrainConfig& config() const { return cfg_; }
  Model& model() { return model_; }

  // Model parameters, Adam moments ("adam.m.<name>", "adam.v.<name>") and
  // counters ("train.step", "train.epochs_done").
  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  Model& model_;
  TrainConfig cfg_;
  AdamState adam_;
  std::size_t epochs_done_ = 0;
};

struct TrainHooks {
  // Where periodic and final checkpoints go; empty disables writing.
  std::filesystem::path checkpoint_dir;
  std::function<void(const EpochReport&, const Trainer&)> on_epoch;
};

// Runs epochs until cfg.epochs have completed (counting any restored ones).
// On a non-finite loss or gradient the parameters are left at their last
// good values, svae_last_good.ckpt is written when a checkpoint directory is
// set, and the NumericError propagates.
std::vector<EpochReport> train(Trainer& trainer, const Dataset& data, const TrainHooks& hooks = {});
std::vector<EpochReport> train(Model& model, const Dataset& data, const TrainConfig& cfg,
                               const TrainHooks& hooks = {});

// Mean squared error of decode(z) against the batch, z drawn from the
// posterior with a seeded stream. Every image is used (no batch dropping).
double reconstruction_mse(const Model& model, const Dataset& data, std::uint64_t seed,
                          std::size_t batch_size = 64);

// One timing line, shared by the bench table and the generate command.
struct TimingRecord {
  std::string event;  // "bench" or "generate"
  std::string variant;
  std::size_t head_width = 0;
  std::size_t encoder_parameters = 0;
  std::size_t decoder_parameters = 0;
  double train_epoch_seconds = 0.0;  // bench only
  std::size_t n_generate = 0;
  double generate_seconds = 0.0;
};
std::string to_json(const TimingRecord& r);

struct BenchConfig {
  std::size_t n_generate = 10000;
  std::size_t generate_batch = 100;
  TrainConfig train;
};

// Times one training epoch and n_generate generations per model. Work is
// interleaved round-robin (batch by batch, rotating the starting model) so
// machine-wide slowdowns hit every model alike. Generation runs the decoder
// on prior draws only.
std::vector<TimingRecord> bench(std::vector<Model>& models, const Dataset& data,
                                const BenchConfig& cfg);

}  // namespace svae
