#include "svae/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "svae/errors.hpp"
#include "svae/ops.hpp"

namespace svae {

namespace {

constexpr std::uint64_t kStepStream = 0x5354455053ULL;
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string epoch_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "svae_epoch_%04zu.ckpt", epoch);
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ContractError("adam eps must be > 0");
  if (batch_size == 0) throw ContractError("batch size must be > 0");
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
  return {{"epochs", std::to_string(epochs)},
          {"batch_size", std::to_string(batch_size)},
          {"learning_rate", fmt(learning_rate)},
          {"beta1", fmt(beta1)},
          {"beta2", fmt(beta2)},
          {"adam_eps", fmt(adam_eps)},
          {"seed", std::to_string(seed)},
          {"checkpoint_every", std::to_string(checkpoint_every)}};
}

void adam_step(std::vector<Tensor>& params, const std::vector<std::span<const double>>& grads,
               AdamState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].empty() && grads[i].size() != params[i].numel()) {
      throw DimensionError("adam_step: gradient " + std::to_string(i) + " has " +
                           std::to_string(grads[i].size()) + " values for a parameter of shape " +
                           shape_str(params[i].shape()));
    }
    for (std::size_t k = 0; k < grads[i].size(); ++k) {
      if (!std::isfinite(grads[i][k])) {
        throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(i) +
                           " at index " + std::to_string(k));
      }
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: state/parameter mismatch");

  const double t = static_cast<double>(++state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = grads[i].empty() ? 0.0 : grads[i][k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      p[k] -= cfg.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.adam_eps);
    }
  }
}

Trainer::Trainer(Model& model, TrainConfig cfg) : model_(model), cfg_(cfg) { cfg_.validate(); }

ElboBreakdown Trainer::step(const Tensor& batch) {
  Rng rng(mix_seed(mix_seed(cfg_.seed, kStepStream), adam_.step));
  std::vector<Tensor> params = model_.parameters();
  for (auto& p : params) p.zero_grad();

  const ElboTerms terms = model_.elbo(batch, rng);
  ops::scale(terms.elbo, -1.0).backward();

  std::vector<std::span<const double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  adam_step(params, grads, adam_, cfg_);
  return breakdown(terms);
}

EpochReport Trainer::run_epoch(const Dataset& data) {
  const BatchIterator it(data.size(), cfg_.batch_size, mix_seed(cfg_.seed, kShuffleStream), true);
  const auto batches = it.batches(epochs_done_);
  if (batches.empty()) {
    throw ContractError("dataset of " + std::to_string(data.size()) +
                        " images is smaller than one batch of " + std::to_string(cfg_.batch_size));
  }
  EpochReport r;
  r.epoch = epochs_done_ + 1;
  for (const auto& idx : batches) {
    const Tensor x = data.gather(idx);
    const auto t0 = Clock::now();
    const ElboBreakdown b = step(x);
    r.wall_seconds += seconds_since(t0);
    r.mean_recon += b.reconstruction;
    r.mean_kl += b.kl;
  }
  const double n = static_cast<double>(batches.size());
  r.mean_recon /= n;
  r.mean_kl /= n;
  r.mean_elbo = r.mean_recon - r.mean_kl;
  ++epochs_done_;
  return r;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c = model_checkpoint(model_);
  for (const auto& [k, v] : cfg_.to_kv()) c.header["train." + k] = v;
  c.header["train.step"] = std::to_string(adam_.step);
  c.header["train.epochs_done"] = std::to_string(epochs_done_);
  const auto named = model_.named_parameters();
  if (!adam_.m.empty()) {
    for (std::size_t i = 0; i < named.size(); ++i) {
      c.arrays.push_back({"adam.m." + named[i].name, Tensor(named[i].value.shape(), adam_.m[i])});
      c.arrays.push_back({"adam.v." + named[i].name, Tensor(named[i].value.shape(), adam_.v[i])});
    }
  }
  return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
  auto counter = [&](const std::string& key) -> std::uint64_t {
    const auto it = ckpt.header.find(key);
    if (it == ckpt.header.end()) throw FormatError("checkpoint has no '" + key + "' entry", 0);
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw FormatError("checkpoint entry '" + key + "' is not an integer", 0);
    }
  };
  model_.load_parameters(ckpt.arrays);
  AdamState state;
  state.step = counter("train.step");
  if (state.step > 0) {
    for (const auto& p : model_.named_parameters()) {
      const Tensor* m = ckpt.find("adam.m." + p.name);
      const Tensor* v = ckpt.find("adam.v." + p.name);
      if (!m || !v) throw FormatError("checkpoint lacks optimizer state for '" + p.name + "'", 0);
      if (m->numel() != p.value.numel() || v->numel() != p.value.numel()) {
        throw FormatError("optimizer state for '" + p.name + "' has the wrong size", 0);
      }
      state.m.push_back(m->values());
      state.v.push_back(v->values());
    }
  }
  adam_ = std::move(state);
  epochs_done_ = static_cast<std::size_t>(counter("train.epochs_done"));
}

std::vector<EpochReport> train(Trainer& trainer, const Dataset& data, const TrainHooks& hooks) {
  const auto& cfg = trainer.config();
  const bool write = !hooks.checkpoint_dir.empty();
  std::vector<EpochReport> reports;
  while (trainer.epochs_done() < cfg.epochs) {
    EpochReport r;
    try {
      r = trainer.run_epoch(data);
    } catch (const NumericError&) {
      if (write) write_checkpoint(hooks.checkpoint_dir / "svae_last_good.ckpt", trainer.checkpoint());
      throw;
    }
    reports.push_back(r);
    if (hooks.on_epoch) hooks.on_epoch(r, trainer);
    if (write && cfg.checkpoint_every > 0 && r.epoch % cfg.checkpoint_every == 0) {
      write_checkpoint(hooks.checkpoint_dir / epoch_name(r.epoch), trainer.checkpoint());
    }
  }
  if (write) write_checkpoint(hooks.checkpoint_dir / "svae_final.ckpt", trainer.checkpoint());
  return reports;
}

std::vector<EpochReport> train(Model& model, const Dataset& data, const TrainConfig& cfg,
                               const TrainHooks& hooks) {
  Trainer trainer(model, cfg);
  return train(trainer, data, hooks);
}

double reconstruction_mse(const Model& model, const Dataset& data, std::uint64_t seed,
                          std::size_t batch_size) {
  if (data.size() == 0) throw ContractError("reconstruction_mse: empty dataset");
  NoGradGuard guard;
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t off = 0; off < data.size(); off += batch_size) {
    const Dataset part = data.slice(off, std::min(batch_size, data.size() - off));
    const EncoderOutput enc = model.encode(part.images);
    const Tensor x_hat = model.decode(model.reparameterize(enc.params, rng).z);
    const auto x = part.images.data();
    const auto y = x_hat.data();
    for (std::size_t i = 0; i < x.size(); ++i) total += (x[i] - y[i]) * (x[i] - y[i]);
  }
  return total / static_cast<double>(data.images.numel());
}

std::string to_json(const TimingRecord& r) {
  nlohmann::ordered_json j;
  j["event"] = r.event;
  j["variant"] = r.variant;
  j["head_width"] = r.head_width;
  j["encoder_parameters"] = r.encoder_parameters;
  j["decoder_parameters"] = r.decoder_parameters;
  j["train_epoch_seconds"] = r.train_epoch_seconds;
  j["n_generate"] = r.n_generate;
  j["generate_seconds"] = r.generate_seconds;
  return j.dump();
}

std::vector<TimingRecord> bench(std::vector<Model>& models, const Dataset& data,
                                const BenchConfig& cfg) {
  const std::size_t k = models.size();
  std::vector<TimingRecord> out(k);
  if (k == 0) return out;
  std::vector<Trainer> trainers;
  trainers.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    trainers.emplace_back(models[i], cfg.train);
    const auto& mc = models[i].config();
    out[i].event = "bench";
    out[i].variant = to_string(mc.variant);
    out[i].head_width = mc.head_width();
    out[i].encoder_parameters = models[i].encoder_parameter_count();
    out[i].decoder_parameters = models[i].decoder_parameter_count();
    out[i].n_generate = cfg.n_generate;
  }

  const BatchIterator it(data.size(), cfg.train.batch_size,
                         mix_seed(cfg.train.seed, kShuffleStream), true);
  const auto batches = it.batches(0);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const Tensor x = data.gather(batches[b]);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t i = (b + j) % k;
      const auto t0 = Clock::now();
      trainers[i].step(x);
      out[i].train_epoch_seconds += seconds_since(t0);
    }
  }

  const std::size_t chunk = std::max<std::size_t>(1, cfg.generate_batch);
  for (std::size_t c = 0, done = 0; done < cfg.n_generate; ++c, done += chunk) {
    const std::size_t count = std::min(chunk, cfg.n_generate - done);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t i = (c + j) % k;
      Rng rng(mix_seed(cfg.train.seed, c));
      const auto t0 = Clock::now();
      models[i].generate(count, rng);
      out[i].generate_seconds += seconds_since(t0);
    }
  }
  return out;
}

}  // namespace svae
