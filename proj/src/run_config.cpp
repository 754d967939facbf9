#include "svae/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>

#include "svae/errors.hpp"

namespace svae {

namespace {

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("'" + key + "' expects an unsigned 64-bit integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Field {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename M>
Field size_field(const char* name, const char* help, M member) {
  return {{name, help},
          [=](RunConfig& c, const std::string& v) { c.*member = parse_size(name, v); },
          [=](const RunConfig& c) { return std::to_string(c.*member); }};
}

template <typename M>
Field double_field(const char* name, const char* help, M member) {
  return {{name, help},
          [=](RunConfig& c, const std::string& v) { c.*member = parse_double(name, v); },
          [=](const RunConfig& c) { return fmt(c.*member); }};
}

template <typename M>
Field path_field(const char* name, const char* help, M member) {
  return {{name, help},
          [=](RunConfig& c, const std::string& v) { c.*member = v; },
          [=](const RunConfig& c) { return (c.*member).string(); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {{"variant", "latent family: original, naive, mvn, lowrank-mvn"},
       [](RunConfig& c, const std::string& v) {
         try {
           c.variant = parse_variant(v);
         } catch (const std::exception& e) {
           throw ConfigError(e.what());
         }
       },
       [](const RunConfig& c) { return to_string(c.variant); }},
      size_field("d", "feature-map side length", &RunConfig::d),
      size_field("n-maps", "number of latent feature maps", &RunConfig::n_maps),
      size_field("latent-dim", "latent size of the original variant", &RunConfig::latent_dim),
      double_field("likelihood-sigma", "std of the Gaussian pixel likelihood",
                   &RunConfig::likelihood_sigma),
      size_field("decoder-hidden", "width of the original decoder's dense layer",
                 &RunConfig::decoder_hidden),
      {{"dataset", "mnist, cifar10 or folder"},
       [](RunConfig& c, const std::string& v) {
         try {
           c.dataset = parse_dataset_kind(v);
         } catch (const std::exception& e) {
           throw ConfigError(e.what());
         }
       },
       [](const RunConfig& c) { return to_string(c.dataset); }},
      path_field("data-dir", "dataset directory", &RunConfig::data_dir),
      size_field("limit", "use only the first N training images (0 = all)", &RunConfig::limit),
      size_field("test-limit", "use only the first N test images (0 = all)", &RunConfig::test_limit),
      size_field("image-size", "square side for folder datasets", &RunConfig::image_size),
      size_field("epochs", "training epochs", &RunConfig::epochs),
      size_field("batch-size", "minibatch size", &RunConfig::batch_size),
      double_field("lr", "Adam learning rate", &RunConfig::lr),
      double_field("beta1", "Adam first-moment decay", &RunConfig::beta1),
      double_field("beta2", "Adam second-moment decay", &RunConfig::beta2),
      double_field("adam-eps", "Adam denominator epsilon", &RunConfig::adam_eps),
      size_field("checkpoint-every", "write a checkpoint every N epochs (0 = final only)",
                 &RunConfig::checkpoint_every),
      path_field("resume", "continue training from this checkpoint", &RunConfig::resume),
      path_field("checkpoint", "checkpoint read by generate and eval-parzen",
                 &RunConfig::checkpoint),
      size_field("count", "images to generate", &RunConfig::count),
      size_field("rows", "grid rows (and columns) per PNG", &RunConfig::rows),
      size_field("n-generate", "images generated per model by bench", &RunConfig::n_generate),
      size_field("n-model-samples", "model samples for the Parzen estimate",
                 &RunConfig::n_model_samples),
      size_field("n-valid", "validation points for bandwidth selection (0 = all)",
                 &RunConfig::n_valid),
      double_field("sigma-min", "smallest Parzen bandwidth", &RunConfig::sigma_min),
      double_field("sigma-max", "largest Parzen bandwidth", &RunConfig::sigma_max),
      size_field("sigma-count", "log-spaced bandwidths in the grid", &RunConfig::sigma_count),
      path_field("out", "output directory", &RunConfig::out),
      {{"seed", "master random seed"},
       [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
  };
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key.name == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::mnist: return "mnist";
    case DatasetKind::cifar10: return "cifar10";
    case DatasetKind::folder: return "folder";
  }
  return "?";
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "mnist") return DatasetKind::mnist;
  if (name == "cifar10") return DatasetKind::cifar10;
  if (name == "folder") return DatasetKind::folder;
  throw ConfigError("unknown dataset '" + name + "' (expected mnist, cifar10 or folder)");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  field(key).set(*this, value);
}

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.learning_rate = lr;
  t.beta1 = beta1;
  t.beta2 = beta2;
  t.adam_eps = adam_eps;
  t.seed = seed;
  t.checkpoint_every = checkpoint_every;
  return t;
}

ParzenConfig RunConfig::parzen_config() const {
  ParzenConfig p;
  p.n_model_samples = n_model_samples;
  p.n_valid = n_valid;
  p.seed = seed;
  try {
    p.sigma_grid = log_spaced_grid(sigma_min, sigma_max, sigma_count);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(f, line); ++lineno) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    field(key);
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

RunConfig resolve_config(const std::map<std::string, std::string>& file_values,
                         const std::map<std::string, std::string>& flag_values) {
  RunConfig c;
  for (const auto& [k, v] : file_values) c.set(k, v);
  for (const auto& [k, v] : flag_values) c.set(k, v);
  return c;
}

}  // namespace svae
