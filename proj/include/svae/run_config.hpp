#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "svae/latent.hpp"
#include "svae/model.hpp"
#include "svae/parzen.hpp"
#include "svae/train.hpp"

namespace svae {

// Bad key, bad value, or unreadable config file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DatasetKind { mnist, cifar10, folder };
std::string to_string(DatasetKind k);
DatasetKind parse_dataset_kind(const std::string& name);

// Every setting the command line understands. Each key below is accepted
// both as a `--key VALUE` flag and as a `key = value` line in a config file.
struct RunConfig {
  // model
  VariantKind variant = VariantKind::lowrank_mvn_spatial;
  std::size_t d = 3;
  std::size_t n_maps = 64;
  std::size_t latent_dim = 81;
  double likelihood_sigma = 1.0;
  std::size_t decoder_hidden = 8;

  // data
  DatasetKind dataset = DatasetKind::mnist;
  std::filesystem::path data_dir = "data/mnist-5k";
  std::size_t limit = 0;       // training images used; 0 = all
  std::size_t test_limit = 0;  // test images used by eval-parzen; 0 = all
  std::size_t image_size = 64; // folder datasets only

  // training
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t checkpoint_every = 0;
  std::filesystem::path resume;

  // generation / evaluation
  std::filesystem::path checkpoint = "out/svae_final.ckpt";
  std::size_t count = 64;
  std::size_t rows = 8;
  std::size_t n_generate = 10000;
  std::size_t n_model_samples = 10000;
  std::size_t n_valid = 0;
  double sigma_min = 0.01;
  double sigma_max = 1.0;
  std::size_t sigma_count = 20;

  std::filesystem::path out = "out";
  std::uint64_t seed = 0;

  // Sets one field from its textual form. Throws ConfigError on an unknown
  // key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  // Current value of a key in the form set() accepts.
  std::string get(const std::string& key) const;

  TrainConfig train_config() const;
  ParzenConfig parzen_config() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

// All keys in a stable order, with one-line descriptions.
const std::vector<ConfigKey>& config_keys();

// Parses `key = value` lines; blank lines and lines starting with '#' are
// skipped. Duplicate keys: the last one wins.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

// defaults <- file values <- flag values.
RunConfig resolve_config(const std::map<std::string, std::string>& file_values,
                         const std::map<std::string, std::string>& flag_values);

}  // namespace svae
