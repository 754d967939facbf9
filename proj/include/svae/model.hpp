#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "svae/latent.hpp"
#include "svae/layers.hpp"
#include "svae/rng.hpp"
#include "svae/tensor.hpp"

namespace svae {

struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 28;
  std::size_t width = 28;

  std::size_t numel() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

struct ModelConfig {
  VariantKind variant = VariantKind::lowrank_mvn_spatial;
  std::size_t d = 3;           // feature-map side
  std::size_t n_maps = 64;     // N
  std::size_t latent_dim = 81; // C; original only (naive requires C = d^2 N)
  ImageShape image;
  double likelihood_sigma = 1.0;

  // Convolutional trunk, relu after each layer, then a dense head of width
  // param_count(variant, d, N, C).
  std::vector<LayerSpec> encoder_layers;
  // Transposed-conv stages applied to [N, d, d] maps; relu between stages,
  // center crop/pad to the image size and sigmoid at the end.
  std::vector<LayerSpec> decoder_layers;
  // Original only: z -> dense(decoder_hidden) -> [hidden, 1, 1] -> one extra
  // transposed-conv stage (kernel d) -> [N, d, d] -> decoder_layers.
  std::size_t decoder_hidden = 8;

  // Throws ContractError when the configuration is inconsistent.
  void validate() const;
  std::size_t head_width() const;
  bool spatial() const { return variant != VariantKind::original; }
  // Total latent dimension: C for original, d^2 N otherwise.
  std::size_t latent_size() const;
  // Shape of one latent draw without the batch axis: [C] or [N, d, d].
  Shape latent_shape() const;

  std::map<std::string, std::string> to_kv() const;
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

// Shipped architectures.
//   mnist: 1x28x28, conv 32/64/128 (3x3, stride 2), decoder 128 -> 1 channels
//          in two stride-3 stages (3x3 -> 9x9 -> 28x28 for d = 3).
//   cifar10: 3x32x32, conv 32/64/128/256, three decoder stages.
//   folder: 3x64x64, conv 32/64/128/256, four decoder stages.
//   tiny: 1x4x4 images, one conv, used for gradient checks.
// For naive the latent_dim argument is ignored and set to d^2 N.
ModelConfig mnist_config(VariantKind v, std::size_t d = 3, std::size_t n_maps = 64,
                         std::size_t latent_dim = 81);
ModelConfig cifar10_config(VariantKind v, std::size_t d = 3, std::size_t n_maps = 128,
                           std::size_t latent_dim = 150);
ModelConfig folder_config(VariantKind v, std::size_t d = 3, std::size_t n_maps = 64,
                          std::size_t latent_dim = 81);
ModelConfig tiny_config(VariantKind v, std::size_t d = 2, std::size_t n_maps = 2,
                        std::size_t latent_dim = 8);

using PosteriorParams = std::variant<DiagonalGaussianParams, MvnFeatureMapParams, LowRankMvnParams>;

struct EncoderOutput {
  Tensor head;  // raw [B, head_width] output
  PosteriorParams params;
};

// Batch means of the two objective terms. elbo = reconstruction - kl.
struct ElboTerms {
  Tensor reconstruction;
  Tensor kl;
  Tensor elbo;
};

struct ElboBreakdown {
  double reconstruction = 0.0;
  double kl = 0.0;
  double elbo = 0.0;
};

ElboBreakdown breakdown(const ElboTerms& terms);

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Splits a raw head output [B, width] per variant:
//   original/naive  [mean | log_var]
//   mvn             [M (N d d) | log omega (N d) | log psi (N d)]
//   lowrank-mvn     [mu (N d) | nu (N d) | log omega (N d) | log psi (N d)]
PosteriorParams split_head(const ModelConfig& config, const Tensor& head);

// Inverse of split_head (no gradient); used to verify the split is a bijection.
Tensor join_head(const ModelConfig& config, const PosteriorParams& params);

class Model {
 public:
  Model(ModelConfig config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }

  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  // Copies values by name; every parameter must be present with its shape.
  void load_parameters(const std::vector<NamedTensor>& values);

  std::size_t encoder_parameter_count() const;
  std::size_t decoder_parameter_count() const;

  EncoderOutput encode(const Tensor& x) const;

  // Draws z in decoder layout ([B, C] or [B, N, d, d]).
  LatentSample reparameterize(const PosteriorParams& params, Rng& rng) const;
  // Same with a supplied standard-normal draw in decoder layout.
  LatentSample reparameterize(const PosteriorParams& params, const Tensor& epsilon) const;

  // Summed KL over the batch and every latent dimension.
  Tensor kl(const PosteriorParams& params) const;

  Tensor decode(const Tensor& z) const;

  // Single-draw ELBO with a Gaussian likelihood N(x; f(z), sigma^2 I).
  ElboTerms elbo(const Tensor& x, Rng& rng) const;

  // z ~ N(0, I) -> decoder, without touching the encoder.
  Tensor generate(std::size_t count, Rng& rng) const;

  // Number of encode() calls so far.
  std::size_t encode_calls() const { return encode_calls_; }

 private:
  Tensor decode_body(Tensor h) const;

  ModelConfig config_;
  std::vector<Layer> encoder_;
  Layer head_;
  std::vector<Layer> decoder_;
  mutable std::size_t encode_calls_ = 0;
};

}  // namespace svae
