#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "svae/checkpoint.hpp"
#include "svae/errors.hpp"
#include "svae/gradcheck.hpp"
#include "svae/model.hpp"
#include "svae/ops.hpp"

using namespace svae;
namespace fs = std::filesystem;

namespace {

Tensor uniform_images(Rng& rng, std::size_t n, const ImageShape& img) {
  std::vector<double> v(n * img.numel());
  for (auto& x : v) x = rng.uniform();
  return Tensor(Shape{n, img.channels, img.height, img.width}, v);
}

void zero_head(Model& m) {
  for (auto& p : m.named_parameters()) {
    if (p.name.rfind("head.", 0) == 0) std::fill(p.value.data().begin(), p.value.data().end(), 0.0);
  }
}

Tensor param(const Model& m, const std::string& name) {
  for (const auto& p : m.named_parameters()) {
    if (p.name == name) return p.value;
  }
  throw std::runtime_error("no parameter " + name);
}

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "svae_test_model";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("head width equals param_count for every preset") {
  for (auto v : kAllVariants) {
    const ModelConfig c = mnist_config(v);
    CHECK(c.head_width() == param_count(v, c.d, c.n_maps, c.latent_dim));
    const Model m(c, 1);
    const Tensor x(Shape{2, 1, 28, 28}, 0.5);
    CHECK(m.encode(x).head.shape() == Shape{2, c.head_width()});
  }
  CHECK(mnist_config(VariantKind::lowrank_mvn_spatial, 3, 64).head_width() == 768);
  CHECK(mnist_config(VariantKind::original, 3, 64, 81).head_width() == 162);
  CHECK(mnist_config(VariantKind::naive_spatial, 3, 64).head_width() == 1152);
  CHECK(mnist_config(VariantKind::mvn_spatial, 3, 64).head_width() == 960);
}

TEST_CASE("config validation") {
  ModelConfig c = mnist_config(VariantKind::naive_spatial, 3, 4);
  CHECK(c.latent_dim == 36);
  c.latent_dim = 35;
  CHECK_THROWS_AS(c.validate(), ContractError);
  ModelConfig e = mnist_config(VariantKind::mvn_spatial);
  e.decoder_layers.back().out_channels = 3;
  CHECK_THROWS_AS(e.validate(), ContractError);
  ModelConfig z = mnist_config(VariantKind::mvn_spatial);
  z.d = 0;
  CHECK_THROWS_AS(z.validate(), ContractError);
}

TEST_CASE("config key=value round trip") {
  for (auto v : kAllVariants) {
    ModelConfig c = cifar10_config(v, 2, 5, 30);
    c.likelihood_sigma = 0.25;
    CHECK(ModelConfig::from_kv(c.to_kv()).to_kv() == c.to_kv());
  }
}

TEST_CASE("latent shape: [C] for original, [N, d, d] otherwise") {
  CHECK(mnist_config(VariantKind::original, 3, 64, 81).latent_shape() == Shape{81});
  CHECK(mnist_config(VariantKind::mvn_spatial, 3, 64).latent_shape() == Shape{64, 3, 3});
  CHECK(mnist_config(VariantKind::naive_spatial, 3, 64).latent_shape() == Shape{64, 3, 3});
}

TEST_CASE("split_head is a bijection") {
  Rng rng(30);
  for (auto v : kAllVariants) {
    const ModelConfig c = tiny_config(v, 3, 2, 7);
    std::vector<double> raw(4 * c.head_width());
    for (auto& x : raw) x = rng.normal();
    const Tensor head(Shape{4, c.head_width()}, raw);
    CHECK(join_head(c, split_head(c, head)).values() == raw);
  }
  CHECK_THROWS_AS(split_head(tiny_config(VariantKind::mvn_spatial), Tensor(Shape{1, 3})), DimensionError);
}

TEST_CASE("split_head layout for low-rank MVN") {
  const ModelConfig c = tiny_config(VariantKind::lowrank_mvn_spatial, 2, 2);
  Tensor head(Shape{1, 16});
  for (std::size_t i = 0; i < 16; ++i) head.data()[i] = static_cast<double>(i);
  const auto p = std::get<LowRankMvnParams>(split_head(c, head));
  CHECK(p.mu.shape() == Shape{1, 2, 2});
  CHECK(p.mu.values() == std::vector<double>{0, 1, 2, 3});
  CHECK(p.nu.values() == std::vector<double>{4, 5, 6, 7});
  CHECK(p.log_diag_omega.values() == std::vector<double>{8, 9, 10, 11});
  CHECK(p.log_diag_psi.values() == std::vector<double>{12, 13, 14, 15});
}

TEST_CASE("zero-weight head gives prior-matching posteriors") {
  Rng rng(31);
  for (auto v : kAllVariants) {
    Model m(tiny_config(v), 5);
    zero_head(m);
    const EncoderOutput enc = m.encode(uniform_images(rng, 3, m.config().image));
    for (double h : enc.head.data()) CHECK(h == 0.0);
    CHECK(m.kl(enc.params).item() == 0.0);
  }
}

TEST_CASE("naive reshape maps flat index k to (k / d^2, row, col)") {
  const ModelConfig c = tiny_config(VariantKind::naive_spatial, 2, 3);
  const Model m(c, 1);
  const std::size_t n = 12;
  std::vector<double> mean(n);
  for (std::size_t k = 0; k < n; ++k) mean[k] = static_cast<double>(k);
  const DiagonalGaussianParams p{Tensor(Shape{1, n}, mean), Tensor(Shape{1, n}, -60.0)};
  const LatentSample s = m.reparameterize(p, Tensor(Shape{1, 3, 2, 2}, 0.0));
  CHECK(s.z.shape() == Shape{1, 3, 2, 2});
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t map = k / 4, row = (k % 4) / 2, col = k % 2;
    CHECK(s.z[((map * 2) + row) * 2 + col] == mean[k]);
  }
  CHECK(ops::reshape(s.z, {1, n}).values() == mean);
}

TEST_CASE("model samples match the samplers called directly") {
  Rng rng(32);
  for (auto v : kAllVariants) {
    const Model m(tiny_config(v), 7);
    const EncoderOutput enc = m.encode(uniform_images(rng, 2, m.config().image));
    Shape shape = m.config().latent_shape();
    shape.insert(shape.begin(), 2);
    std::vector<double> e(shape_numel(shape));
    for (auto& x : e) x = rng.normal();
    const Tensor eps(shape, e);
    const LatentSample got = m.reparameterize(enc.params, eps);
    Tensor want;
    if (v == VariantKind::original) {
      want = sample_diag_gaussian(std::get<DiagonalGaussianParams>(enc.params), eps).z;
    } else if (v == VariantKind::naive_spatial) {
      const auto& p = std::get<DiagonalGaussianParams>(enc.params);
      want = sample_diag_gaussian(p, ops::reshape(eps, p.mean.shape())).z;
    } else if (v == VariantKind::mvn_spatial) {
      want = sample_mvn(std::get<MvnFeatureMapParams>(enc.params), eps).z;
    } else {
      want = sample_lowrank_mvn(std::get<LowRankMvnParams>(enc.params), eps).z;
    }
    CHECK(got.z.values() == want.values());
  }
}

TEST_CASE("mvn with d = 1, N = C equals original given matched parameters") {
  Rng rng(33);
  const std::size_t c = 6;
  const Model orig(tiny_config(VariantKind::original, 1, c, c), 1);
  const Model mvn(tiny_config(VariantKind::mvn_spatial, 1, c, c), 1);
  std::vector<double> m(c), lo(c), lp(c), eps(c);
  for (std::size_t i = 0; i < c; ++i) m[i] = rng.normal(), lo[i] = rng.normal(), lp[i] = rng.normal(), eps[i] = rng.normal();
  std::vector<double> lv(c);
  for (std::size_t i = 0; i < c; ++i) lv[i] = lo[i] + lp[i];
  const PosteriorParams po = DiagonalGaussianParams{Tensor(Shape{1, c}, m), Tensor(Shape{1, c}, lv)};
  const PosteriorParams pm = MvnFeatureMapParams{Tensor(Shape{1, c, 1, 1}, m), Tensor(Shape{1, c, 1}, lo),
                                                 Tensor(Shape{1, c, 1}, lp)};
  const LatentSample a = orig.reparameterize(po, Tensor(Shape{1, c}, eps));
  const LatentSample b = mvn.reparameterize(pm, Tensor(Shape{1, c, 1, 1}, eps));
  for (std::size_t i = 0; i < c; ++i) CHECK(std::abs(a.z[i] - b.z[i]) <= 1e-12);
  CHECK(std::abs(orig.kl(po).item() - mvn.kl(pm).item()) <= 1e-12);
}

TEST_CASE("decode: output shape and range for every preset") {
  Rng rng(34);
  const std::vector<ModelConfig> configs = {mnist_config(VariantKind::original, 3, 8, 20),
                                            mnist_config(VariantKind::mvn_spatial, 3, 8),
                                            cifar10_config(VariantKind::lowrank_mvn_spatial, 3, 8),
                                            cifar10_config(VariantKind::original, 3, 8, 20),
                                            folder_config(VariantKind::naive_spatial, 3, 4),
                                            tiny_config(VariantKind::mvn_spatial)};
  for (const auto& c : configs) {
    const Model m(c, 2);
    const Tensor x = m.generate(3, rng);
    CHECK(x.shape() == Shape{3, c.image.channels, c.image.height, c.image.width});
    for (double v : x.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  const Model m(tiny_config(VariantKind::mvn_spatial), 1);
  CHECK_THROWS_AS(m.decode(Tensor(Shape{1, 3, 2, 2})), DimensionError);
  CHECK_THROWS_AS(m.encode(Tensor(Shape{1, 1, 5, 4})), DimensionError);
}

TEST_CASE("shipped MNIST decoders have parameter counts within 10%") {
  std::vector<std::size_t> counts;
  for (auto v : kAllVariants) counts.push_back(Model(mnist_config(v, 3, 64, 81), 1).decoder_parameter_count());
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  CHECK(static_cast<double>(*hi - *lo) / static_cast<double>(*lo) <= 0.10);
  // Spatial decoders start from d x d maps; the original adds one up-sampling stage.
  CHECK(Model(mnist_config(VariantKind::original), 1).decoder_parameter_count() == 81233);
  CHECK(Model(mnist_config(VariantKind::mvn_spatial), 1).decoder_parameter_count() == 75905);
}

TEST_CASE("perfect reconstruction with zero-KL parameters gives -(D/2) log(2 pi sigma^2)") {
  for (auto v : kAllVariants) {
    ModelConfig c = mnist_config(v, 3, 4, 10);
    c.likelihood_sigma = 0.7;
    Model m(c, 3);
    zero_head(m);
    // Constant decoder: zero weights everywhere, final bias = logit(0.3).
    const auto named = m.named_parameters();
    for (auto p : named) {
      if (p.name.rfind("decoder.", 0) == 0) std::fill(p.value.data().begin(), p.value.data().end(), 0.0);
    }
    Tensor last_bias = named.back().value;
    last_bias.data()[0] = std::log(0.3 / 0.7);
    Rng rng(4);
    const ElboBreakdown b = breakdown(m.elbo(Tensor(Shape{2, 1, 28, 28}, 0.3), rng));
    const double want = -0.5 * 784.0 * std::log(2.0 * std::numbers::pi * 0.49);
    CHECK(b.kl == 0.0);
    CHECK(b.elbo == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("elbo terms: kl is the closed form on the flattened params and elbo <= reconstruction") {
  Rng rng(35);
  for (auto v : kAllVariants) {
    const Model m(tiny_config(v), 9);
    const Tensor x = uniform_images(rng, 4, m.config().image);
    Rng r1(5);
    const ElboTerms t = m.elbo(x, r1);
    const EncoderOutput enc = m.encode(x);
    const double kl = m.kl(enc.params).item() / 4.0;
    CHECK(t.kl.item() == doctest::Approx(kl).epsilon(1e-13));
    CHECK(t.elbo.item() == doctest::Approx(t.reconstruction.item() - t.kl.item()).epsilon(1e-15));
    CHECK(t.kl.item() >= 0.0);
    CHECK(t.elbo.item() <= t.reconstruction.item());
  }
}

TEST_CASE("mvn with M = mu nu^T has the same elbo as low-rank with (mu, nu)") {
  Rng rng(36);
  const ModelConfig cm = tiny_config(VariantKind::mvn_spatial);
  const ModelConfig cl = tiny_config(VariantKind::lowrank_mvn_spatial);
  Model mvn(cm, 1), lr(cl, 1);
  // Share the decoder so only the posterior parameterization differs.
  std::vector<NamedTensor> dec;
  for (const auto& p : lr.named_parameters()) {
    if (p.name.rfind("decoder.", 0) == 0) dec.push_back(p);
  }
  for (auto& p : mvn.named_parameters()) {
    for (const auto& q : dec) {
      if (q.name == p.name) std::copy(q.value.data().begin(), q.value.data().end(), p.value.data().begin());
    }
  }
  const std::size_t n = 2, d = 2;
  std::vector<double> mu(n * d), nu(n * d), lo(n * d), lp(n * d), eps(n * d * d);
  for (auto* v : {&mu, &nu, &lo, &lp, &eps})
    for (auto& x : *v) x = rng.normal();
  const Tensor mu_t(Shape{1, n, d}, mu), nu_t(Shape{1, n, d}, nu);
  const Tensor lo_t(Shape{1, n, d}, lo), lp_t(Shape{1, n, d}, lp), eps_t(Shape{1, n, d, d}, eps);
  const PosteriorParams pl = LowRankMvnParams{mu_t, nu_t, lo_t, lp_t};
  const PosteriorParams pm = MvnFeatureMapParams{mean_matrix(mu_t, nu_t), lo_t, lp_t};
  const Tensor xa = lr.decode(lr.reparameterize(pl, eps_t).z);
  const Tensor xb = mvn.decode(mvn.reparameterize(pm, eps_t).z);
  CHECK(xa.values() == xb.values());
  CHECK(lr.kl(pl).item() == doctest::Approx(mvn.kl(pm).item()).epsilon(1e-14));
}

TEST_CASE("non-finite elbo raises a numeric error with diagnostics") {
  ModelConfig c = tiny_config(VariantKind::lowrank_mvn_spatial);
  c.likelihood_sigma = 1e-200;
  const Model m(c, 1);
  Rng rng(1);
  try {
    m.elbo(Tensor(Shape{1, 1, 4, 4}, 0.9), rng);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("lowrank-mvn") != std::string::npos);
  }
}

TEST_CASE("full elbo passes the finite-difference check for every variant") {
  Rng rng(37);
  for (auto v : kAllVariants) {
    const Model m(tiny_config(v), 11);
    const Tensor x = uniform_images(rng, 3, m.config().image);
    auto loss = [&] {
      Rng r(17);
      return ops::scale(m.elbo(x, r).elbo, -1.0);
    };
    const auto res = finite_difference_check(loss, m.parameters(), 1e-5);
    INFO(to_string(v));
    CHECK(res.max_relative_error < 1e-4);
    CHECK(res.coords_checked > 100);
  }
}

TEST_CASE("identical seeds give bit-identical models and outputs") {
  const ModelConfig c = mnist_config(VariantKind::mvn_spatial, 3, 8);
  const Model a(c, 42), b(c, 42), other(c, 43);
  Rng ra(1), rb(1);
  CHECK(a.generate(2, ra).values() == b.generate(2, rb).values());
  CHECK(param(a, "head.weight").values() == param(b, "head.weight").values());
  CHECK(param(a, "head.weight").values() != param(other, "head.weight").values());
}

TEST_CASE("generation never runs the encoder") {
  const Model m(mnist_config(VariantKind::lowrank_mvn_spatial, 3, 8), 1);
  Rng rng(2);
  const std::size_t before = m.encode_calls();
  m.generate(5, rng);
  CHECK(m.encode_calls() == before);
  m.encode(Tensor(Shape{1, 1, 28, 28}));
  CHECK(m.encode_calls() == before + 1);
}

TEST_CASE("checkpoint round trip") {
  for (auto v : kAllVariants) {
    ModelConfig c = tiny_config(v);
    c.likelihood_sigma = 0.5;
    const Model m(c, 77);
    const fs::path path = temp_path("rt_" + to_string(v) + ".ckpt");
    write_checkpoint(path, model_checkpoint(m));
    const Model back = model_from_checkpoint(read_checkpoint(path));
    CHECK(back.config().to_kv() == m.config().to_kv());
    const auto pa = m.named_parameters(), pb = back.named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].name == pb[i].name);
      CHECK(pa[i].value.values() == pb[i].value.values());
    }
  }
}

TEST_CASE("checkpoint corruption is a format error with an offset") {
  const Model m(tiny_config(VariantKind::mvn_spatial), 1);
  const fs::path path = temp_path("corrupt.ckpt");
  write_checkpoint(path, model_checkpoint(m));
  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  write("XVAE1\n" + bytes.substr(6));
  CHECK_THROWS_AS(read_checkpoint(path), FormatError);

  write(bytes.substr(0, bytes.size() - 20));
  try {
    read_checkpoint(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() > 0);
  }

  std::string flipped = bytes;
  flipped[flipped.size() - 12] ^= 0x40;
  write(flipped);
  CHECK_THROWS_WITH_AS(read_checkpoint(path), doctest::Contains("checksum"), FormatError);

  write(bytes + "x");
  CHECK_THROWS_AS(read_checkpoint(path), FormatError);

  CHECK_THROWS_AS(read_checkpoint(temp_path("missing.ckpt")), IoError);
}

TEST_CASE("checkpoint lookup and header validation") {
  Checkpoint c;
  c.header["a"] = "1";
  c.arrays.push_back({"w", Tensor::from({1, 2})});
  CHECK(c.find("w") != nullptr);
  CHECK(c.find("v") == nullptr);
  c.header["bad=key"] = "x";
  CHECK_THROWS_AS(write_checkpoint(temp_path("bad.ckpt"), c), ContractError);
}
