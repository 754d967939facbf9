#include "svae/model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "svae/errors.hpp"
#include "svae/ops.hpp"

namespace svae {

namespace {

LayerSpec tconv(std::size_t out, std::size_t k, std::size_t s, std::size_t p = 0) {
  return {LayerKind::conv2d_transpose, out, k, s, p, 0};
}

LayerSpec conv(std::size_t out) { return {LayerKind::conv2d, out, 3, 2, 1, 0}; }

ModelConfig base_config(VariantKind v, std::size_t d, std::size_t n_maps, std::size_t latent_dim) {
  ModelConfig c;
  c.variant = v;
  c.d = d;
  c.n_maps = n_maps;
  c.latent_dim = v == VariantKind::naive_spatial ? d * d * n_maps : latent_dim;
  return c;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const std::string& kv_at(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ContractError("model config is missing key '" + key + "'");
  return it->second;
}

std::size_t kv_size(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto& s = kv_at(kv, key);
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ContractError("model config key '" + key + "' is not an integer: '" + s + "'");
  }
}

std::size_t conv_out(std::size_t in, const LayerSpec& s) {
  if (in + 2 * s.padding < s.kernel) {
    throw ContractError("encoder layer kernel " + std::to_string(s.kernel) +
                        " does not fit a padded input of " + std::to_string(in + 2 * s.padding));
  }
  return (in + 2 * s.padding - s.kernel) / s.stride + 1;
}

}  // namespace

void ModelConfig::validate() const {
  if (d == 0 || n_maps == 0) throw ContractError("model config: d and N must be positive");
  if (variant == VariantKind::original && latent_dim == 0) {
    throw ContractError("model config: latent_dim must be positive");
  }
  if (variant == VariantKind::naive_spatial && latent_dim != d * d * n_maps) {
    throw ContractError("model config: naive variant requires latent_dim = d^2 N = " +
                        std::to_string(d * d * n_maps) + ", got " + std::to_string(latent_dim));
  }
  if (image.numel() == 0) throw ContractError("model config: empty image shape");
  if (!(likelihood_sigma > 0.0) || !std::isfinite(likelihood_sigma)) {
    throw ContractError("model config: likelihood_sigma must be positive");
  }
  if (decoder_layers.empty()) throw ContractError("model config: decoder needs at least one stage");
  for (const auto& s : encoder_layers) {
    if (s.kind != LayerKind::conv2d) throw ContractError("model config: encoder layers must be conv2d");
    if (s.stride == 0 || s.kernel == 0) throw ContractError("model config: zero stride/kernel");
  }
  for (const auto& s : decoder_layers) {
    if (s.kind != LayerKind::conv2d_transpose) {
      throw ContractError("model config: decoder layers must be conv2d_transpose");
    }
    if (s.stride == 0 || s.kernel == 0) throw ContractError("model config: zero stride/kernel");
  }
  if (decoder_layers.back().out_channels != image.channels) {
    throw ContractError("model config: last decoder stage must output " +
                        std::to_string(image.channels) + " channels");
  }
  if (variant == VariantKind::original && decoder_hidden == 0) {
    throw ContractError("model config: decoder_hidden must be positive");
  }
}

std::size_t ModelConfig::head_width() const { return param_count(variant, d, n_maps, latent_dim); }

std::size_t ModelConfig::latent_size() const {
  return variant == VariantKind::original ? latent_dim : d * d * n_maps;
}

Shape ModelConfig::latent_shape() const {
  if (variant == VariantKind::original) return {latent_dim};
  return {n_maps, d, d};
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
  return {
      {"variant", to_string(variant)},
      {"d", std::to_string(d)},
      {"n_maps", std::to_string(n_maps)},
      {"latent_dim", std::to_string(latent_dim)},
      {"image_channels", std::to_string(image.channels)},
      {"image_height", std::to_string(image.height)},
      {"image_width", std::to_string(image.width)},
      {"likelihood_sigma", format_double(likelihood_sigma)},
      {"encoder_layers", format_layer_specs(encoder_layers)},
      {"decoder_layers", format_layer_specs(decoder_layers)},
      {"decoder_hidden", std::to_string(decoder_hidden)},
  };
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.variant = parse_variant(kv_at(kv, "variant"));
  c.d = kv_size(kv, "d");
  c.n_maps = kv_size(kv, "n_maps");
  c.latent_dim = kv_size(kv, "latent_dim");
  c.image = {kv_size(kv, "image_channels"), kv_size(kv, "image_height"),
             kv_size(kv, "image_width")};
  try {
    c.likelihood_sigma = std::stod(kv_at(kv, "likelihood_sigma"));
  } catch (const std::invalid_argument&) {
    throw ContractError("model config key 'likelihood_sigma' is not a number");
  }
  c.encoder_layers = parse_layer_specs(kv_at(kv, "encoder_layers"));
  c.decoder_layers = parse_layer_specs(kv_at(kv, "decoder_layers"));
  c.decoder_hidden = kv_size(kv, "decoder_hidden");
  c.validate();
  return c;
}

ModelConfig mnist_config(VariantKind v, std::size_t d, std::size_t n_maps, std::size_t latent_dim) {
  ModelConfig c = base_config(v, d, n_maps, latent_dim);
  c.image = {1, 28, 28};
  c.encoder_layers = {conv(32), conv(64), conv(128)};
  // d x d -> 3d x 3d -> 9d + 1 (28 for d = 3).
  c.decoder_layers = {tconv(128, 3, 3), tconv(1, 4, 3)};
  return c;
}

ModelConfig cifar10_config(VariantKind v, std::size_t d, std::size_t n_maps,
                           std::size_t latent_dim) {
  ModelConfig c = base_config(v, d, n_maps, latent_dim);
  c.image = {3, 32, 32};
  c.encoder_layers = {conv(32), conv(64), conv(128), conv(256)};
  // 3 -> 9 -> 18 -> 36, cropped to 32.
  c.decoder_layers = {tconv(256, 3, 3), tconv(128, 4, 2, 1), tconv(3, 4, 2, 1)};
  return c;
}

ModelConfig folder_config(VariantKind v, std::size_t d, std::size_t n_maps,
                          std::size_t latent_dim) {
  ModelConfig c = base_config(v, d, n_maps, latent_dim);
  c.image = {3, 64, 64};
  c.encoder_layers = {conv(32), conv(64), conv(128), conv(256)};
  // 3 -> 9 -> 18 -> 36 -> 72, cropped to 64.
  c.decoder_layers = {tconv(256, 3, 3), tconv(128, 4, 2, 1), tconv(64, 4, 2, 1),
                      tconv(3, 4, 2, 1)};
  return c;
}

ModelConfig tiny_config(VariantKind v, std::size_t d, std::size_t n_maps, std::size_t latent_dim) {
  ModelConfig c = base_config(v, d, n_maps, latent_dim);
  c.image = {1, 4, 4};
  c.encoder_layers = {{LayerKind::conv2d, 2, 3, 2, 1, 0}};
  c.decoder_layers = {tconv(2, 2, 2), tconv(1, 1, 1)};
  c.decoder_hidden = 3;
  return c;
}

ElboBreakdown breakdown(const ElboTerms& terms) {
  return {terms.reconstruction.item(), terms.kl.item(), terms.elbo.item()};
}

PosteriorParams split_head(const ModelConfig& config, const Tensor& head) {
  if (head.rank() != 2 || head.dim(1) != config.head_width()) {
    throw DimensionError("split_head: expected [B, " + std::to_string(config.head_width()) +
                         "], got " + shape_str(head.shape()));
  }
  const std::size_t batch = head.dim(0), d = config.d, n = config.n_maps;
  switch (config.variant) {
    case VariantKind::original:
    case VariantKind::naive_spatial: {
      const std::size_t c = config.latent_size();
      return DiagonalGaussianParams{ops::slice_cols(head, 0, c), ops::slice_cols(head, c, c)};
    }
    case VariantKind::mvn_spatial: {
      const std::size_t m = n * d * d, f = n * d;
      return MvnFeatureMapParams{
          ops::reshape(ops::slice_cols(head, 0, m), {batch, n, d, d}),
          ops::reshape(ops::slice_cols(head, m, f), {batch, n, d}),
          ops::reshape(ops::slice_cols(head, m + f, f), {batch, n, d})};
    }
    case VariantKind::lowrank_mvn_spatial: {
      const std::size_t f = n * d;
      auto part = [&](std::size_t k) {
        return ops::reshape(ops::slice_cols(head, k * f, f), {batch, n, d});
      };
      return LowRankMvnParams{part(0), part(1), part(2), part(3)};
    }
  }
  throw ContractError("split_head: unknown variant");
}

Tensor join_head(const ModelConfig& config, const PosteriorParams& params) {
  std::vector<const Tensor*> parts;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, DiagonalGaussianParams>) {
          parts = {&p.mean, &p.log_var};
        } else if constexpr (std::is_same_v<P, MvnFeatureMapParams>) {
          parts = {&p.mean_matrix, &p.log_diag_omega, &p.log_diag_psi};
        } else {
          parts = {&p.mu, &p.nu, &p.log_diag_omega, &p.log_diag_psi};
        }
      },
      params);
  const std::size_t batch = parts.front()->dim(0);
  const std::size_t width = config.head_width();
  Tensor out(Shape{batch, width});
  std::size_t offset = 0;
  for (const Tensor* t : parts) {
    const std::size_t w = t->numel() / batch;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < w; ++i) out.data()[b * width + offset + i] = (*t)[b * w + i];
    offset += w;
  }
  if (offset != width) throw DimensionError("join_head: parts do not fill the head width");
  return out;
}

Model::Model(ModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(init_seed);

  std::size_t ch = config_.image.channels, h = config_.image.height, w = config_.image.width;
  for (const auto& spec : config_.encoder_layers) {
    encoder_.push_back(make_layer(spec, ch, rng));
    ch = spec.out_channels;
    h = conv_out(h, spec);
    w = conv_out(w, spec);
  }
  head_ = make_layer({LayerKind::dense, config_.head_width(), 0, 1, 0, 0}, ch * h * w, rng);

  if (config_.variant == VariantKind::original) {
    decoder_.push_back(
        make_layer({LayerKind::dense, config_.decoder_hidden, 0, 1, 0, 0}, config_.latent_dim, rng));
    decoder_.push_back(
        make_layer(tconv(config_.n_maps, config_.d, 1), config_.decoder_hidden, rng));
  }
  ch = config_.n_maps;
  for (const auto& spec : config_.decoder_layers) {
    decoder_.push_back(make_layer(spec, ch, rng));
    ch = spec.out_channels;
  }
}

std::vector<NamedTensor> Model::named_parameters() const {
  std::vector<NamedTensor> out;
  auto add = [&](const std::string& prefix, const Layer& l) {
    out.push_back({prefix + ".weight", l.weights});
    out.push_back({prefix + ".bias", l.bias});
  };
  for (std::size_t i = 0; i < encoder_.size(); ++i) add("encoder." + std::to_string(i), encoder_[i]);
  add("head", head_);
  for (std::size_t i = 0; i < decoder_.size(); ++i) add("decoder." + std::to_string(i), decoder_[i]);
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.value);
  return out;
}

void Model::load_parameters(const std::vector<NamedTensor>& values) {
  for (auto& p : named_parameters()) {
    const NamedTensor* src = nullptr;
    for (const auto& v : values) {
      if (v.name == p.name) src = &v;
    }
    if (!src) throw ContractError("missing parameter '" + p.name + "'");
    if (src->value.shape() != p.value.shape()) {
      throw DimensionError("parameter '" + p.name + "' has shape " +
                           shape_str(src->value.shape()) + ", expected " +
                           shape_str(p.value.shape()));
    }
    std::copy(src->value.data().begin(), src->value.data().end(), p.value.data().begin());
  }
}

std::size_t Model::encoder_parameter_count() const {
  std::size_t n = head_.parameter_count();
  for (const auto& l : encoder_) n += l.parameter_count();
  return n;
}

std::size_t Model::decoder_parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : decoder_) n += l.parameter_count();
  return n;
}

EncoderOutput Model::encode(const Tensor& x) const {
  const auto& img = config_.image;
  if (x.rank() != 4 || x.dim(1) != img.channels || x.dim(2) != img.height ||
      x.dim(3) != img.width) {
    throw DimensionError("encode: expected [B, " + std::to_string(img.channels) + ", " +
                         std::to_string(img.height) + ", " + std::to_string(img.width) +
                         "], got " + shape_str(x.shape()));
  }
  ++encode_calls_;
  Tensor h = x;
  for (const auto& l : encoder_) h = ops::relu(l.forward(h));
  h = ops::reshape(h, {x.dim(0), h.numel() / x.dim(0)});
  Tensor head = head_.forward(h);
  return {head, split_head(config_, head)};
}

LatentSample Model::reparameterize(const PosteriorParams& params, Rng& rng) const {
  const std::size_t batch = std::visit(
      [](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, DiagonalGaussianParams>) return p.mean.dim(0);
        else if constexpr (std::is_same_v<P, MvnFeatureMapParams>) return p.mean_matrix.dim(0);
        else return p.mu.dim(0);
      },
      params);
  Shape shape = config_.latent_shape();
  shape.insert(shape.begin(), batch);
  return reparameterize(params, standard_normal(shape, rng));
}

LatentSample Model::reparameterize(const PosteriorParams& params, const Tensor& epsilon) const {
  switch (config_.variant) {
    case VariantKind::original:
      return sample_diag_gaussian(std::get<DiagonalGaussianParams>(params), epsilon);
    case VariantKind::naive_spatial: {
      // Flat draw followed by a reshape into N maps of d x d.
      const auto& p = std::get<DiagonalGaussianParams>(params);
      const Tensor flat_eps = ops::reshape(epsilon, p.mean.shape());
      LatentSample s = sample_diag_gaussian(p, flat_eps);
      return {ops::reshape(s.z, epsilon.shape()), epsilon};
    }
    case VariantKind::mvn_spatial:
      return sample_mvn(std::get<MvnFeatureMapParams>(params), epsilon);
    case VariantKind::lowrank_mvn_spatial:
      return sample_lowrank_mvn(std::get<LowRankMvnParams>(params), epsilon);
  }
  throw ContractError("reparameterize: unknown variant");
}

Tensor Model::kl(const PosteriorParams& params) const {
  return std::visit([](const auto& p) { return kl_to_standard_normal(p); }, params);
}

Tensor Model::decode(const Tensor& z) const {
  Shape expected = config_.latent_shape();
  if (z.rank() != expected.size() + 1 ||
      !std::equal(expected.begin(), expected.end(), z.shape().begin() + 1)) {
    throw DimensionError("decode: latent shape " + shape_str(z.shape()) + " does not match " +
                         shape_str(expected) + " per example");
  }
  if (config_.variant != VariantKind::original) return decode_body(z);
  Tensor h = ops::relu(decoder_[0].forward(z));
  h = ops::reshape(h, {z.dim(0), config_.decoder_hidden, 1, 1});
  return decode_body(ops::relu(decoder_[1].forward(h)));
}

Tensor Model::decode_body(Tensor h) const {
  const std::size_t first = config_.variant == VariantKind::original ? 2 : 0;
  for (std::size_t i = first; i < decoder_.size(); ++i) {
    h = decoder_[i].forward(h);
    if (i + 1 < decoder_.size()) h = ops::relu(h);
  }
  h = ops::crop_or_pad(h, config_.image.height, config_.image.width);
  return ops::sigmoid(h);
}

ElboTerms Model::elbo(const Tensor& x, Rng& rng) const {
  const EncoderOutput enc = encode(x);
  const LatentSample sample = reparameterize(enc.params, rng);
  const Tensor x_hat = decode(sample.z);

  const double batch = static_cast<double>(x.dim(0));
  const double dims = static_cast<double>(config_.image.numel());
  const double var = config_.likelihood_sigma * config_.likelihood_sigma;
  // log N(x; f(z), sigma^2 I) = -|x - f(z)|^2 / (2 sigma^2) - (D/2) log(2 pi sigma^2)
  Tensor sq = ops::sum(ops::square(ops::sub(x, x_hat)));
  Tensor recon = ops::add_scalar(ops::scale(sq, -1.0 / (2.0 * var * batch)),
                                 -0.5 * dims * std::log(2.0 * std::numbers::pi * var));
  Tensor kl_mean = ops::scale(kl(enc.params), 1.0 / batch);
  Tensor elbo = ops::sub(recon, kl_mean);
  if (!std::isfinite(elbo.item())) {
    std::ostringstream os;
    os << "elbo is not finite (reconstruction=" << recon.item() << ", kl=" << kl_mean.item()
       << ", variant=" << to_string(config_.variant) << ")";
    throw NumericError(os.str());
  }
  return {recon, kl_mean, elbo};
}

Tensor Model::generate(std::size_t count, Rng& rng) const {
  NoGradGuard guard;
  Shape shape = config_.latent_shape();
  shape.insert(shape.begin(), count);
  return decode(standard_normal(shape, rng));
}

}  // namespace svae
