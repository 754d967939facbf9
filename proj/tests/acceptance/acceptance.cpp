// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Every check compares the library against an independent
// route (dense oracles, Monte Carlo, quadrature, analytic densities, or a
// second process run).

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "svae/data.hpp"
#include "svae/latent.hpp"
#include "svae/model.hpp"
#include "svae/ops.hpp"
#include "svae/parzen.hpp"
#include "svae/rng.hpp"
#include "svae/train.hpp"

using namespace svae;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, const std::string& name, double runtime_limit_s, const std::function<Verdict()>& body) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  bool ok = v.passed;
  std::string detail = v.detail;
  if (runtime_limit_s > 0 && secs >= runtime_limit_s) {
    ok = false;
    detail += " (runtime limit " + std::to_string(runtime_limit_s) + " s exceeded)";
  }
  if (!ok) ++failures;
  std::printf("criterion %2d %-4s %-34s %8.2fs  %s\n", id, ok ? "PASS" : "FAIL", name.c_str(), secs,
              detail.c_str());
  std::fflush(stdout);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::vector<double> normals(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

std::vector<double> uniforms(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

std::vector<double> exp_of(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::exp(v[i]);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------

Verdict kronecker_identity() {
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + static_cast<std::size_t>(trial % 16);
    const auto a = exp_of(normals(rng, d)), b = exp_of(normals(rng, d));
    const auto want = oracle::dense_kron_diag(a, b);
    const auto got = kron_diag(a, b);
    const Tensor got_t = svae::kron_diag(Tensor(Shape{d}, a), Tensor(Shape{d}, b));
    for (std::size_t i = 0; i < want.size(); ++i) {
      worst = std::max(worst, std::abs(got[i] - want[i]));
      worst = std::max(worst, std::abs(got_t[i] - want[i]));
    }
  }
  return {worst < 1e-12, "max abs error " + num(worst) + " < 1e-12 over 1000 pairs, d = 1..16"};
}

Verdict head_widths() {
  struct Case { VariantKind v; std::size_t want; };
  const Case cases[] = {{VariantKind::original, 162}, {VariantKind::naive_spatial, 1152},
                        {VariantKind::mvn_spatial, 960}, {VariantKind::lowrank_mvn_spatial, 768}};
  std::string detail;
  bool ok = true;
  const Tensor x(Shape{1, 1, 28, 28}, 0.5);
  for (const auto& c : cases) {
    const std::size_t formula = param_count(c.v, 3, 64, 81);
    // Second route: the width the shipped encoder actually emits.
    const Model model(mnist_config(c.v, 3, 64, 81), 1);
    NoGradGuard guard;
    const std::size_t emitted = model.encode(x).head.dim(1);
    ok = ok && formula == c.want && emitted == c.want;
    detail += to_string(c.v) + "=" + std::to_string(formula) + "/" + std::to_string(emitted) + " ";
  }
  return {ok, detail + "(want 162/1152/960/768)"};
}

Verdict kl_correctness() {
  Rng rng(303);
  double worst = 0.0;
  bool zero_ok = true;
  {
    const std::vector<double> z(16, 0.0);
    zero_ok = kl_to_standard_normal(z, z) == 0.0 &&
              kl_to_standard_normal(Tensor(Shape{16}, z), Tensor(Shape{16}, z)).item() == 0.0;
    const Tensor zm(Shape{4, 4}, 0.0), zl(Shape{4}, 0.0);
    zero_ok = zero_ok && kl_to_standard_normal(MvnFeatureMapParams{zm, zl, zl}).item() == 0.0;
    zero_ok = zero_ok && kl_to_standard_normal(LowRankMvnParams{zl, zl, zl, zl}).item() == 0.0;
  }
  for (int set = 0; set < 20; ++set) {
    // Element-wise mean and log-variance in the 16 latent dimensions, plus the
    // library value for the family the set is drawn from.
    std::vector<double> mean, log_var;
    double closed = 0.0;
    if (set < 10) {
      mean = normals(rng, 16);
      log_var = uniforms(rng, 16, -1.5, 1.0);
      closed = kl_to_standard_normal(mean, log_var);
    } else if (set < 15) {
      const auto m = normals(rng, 16), lo = uniforms(rng, 4, -1.0, 0.5), lp = uniforms(rng, 4, -1.0, 0.5);
      closed = kl_to_standard_normal(MvnFeatureMapParams{Tensor(Shape{4, 4}, m), Tensor(Shape{4}, lo),
                                                         Tensor(Shape{4}, lp)})
                   .item();
      mean = m;
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) log_var.push_back(lo[i] + lp[j]);
    } else {
      const auto mu = normals(rng, 4), nu = normals(rng, 4);
      const auto lo = uniforms(rng, 4, -1.0, 0.5), lp = uniforms(rng, 4, -1.0, 0.5);
      closed = kl_to_standard_normal(LowRankMvnParams{Tensor(Shape{4}, mu), Tensor(Shape{4}, nu),
                                                      Tensor(Shape{4}, lo), Tensor(Shape{4}, lp)})
                   .item();
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
          mean.push_back(mu[i] * nu[j]);
          log_var.push_back(lo[i] + lp[j]);
        }
    }
    const auto [mc, se] = oracle::monte_carlo_kl(mean, log_var, 1000000, [&] { return rng.normal(); });
    (void)se;
    worst = std::max(worst, std::abs(closed - mc) / std::abs(mc));
  }
  return {zero_ok && worst < 0.01,
          "max relative error " + num(worst) + " < 0.01 over 20 sets; KL(0,0)=0 " + (zero_ok ? "yes" : "NO")};
}

Verdict sampler_moments() {
  const std::size_t draws = 100000;
  Rng rng(404);
  double worst_z = 0.0;
  for (VariantKind v : kAllVariants) {
    const ModelConfig cfg = tiny_config(v);
    const Model model(cfg, 1);
    const std::size_t width = cfg.head_width(), d = cfg.d, n = cfg.n_maps;
    std::vector<double> row = normals(rng, width, 0.7);
    std::vector<double> head(draws * width);
    for (std::size_t b = 0; b < draws; ++b) std::copy(row.begin(), row.end(), head.begin() + b * width);
    const PosteriorParams params = split_head(cfg, Tensor(Shape{draws, width}, head));
    Tensor z;
    {
      NoGradGuard guard;
      z = model.reparameterize(params, rng).z;
    }
    const std::size_t dim = z.numel() / draws;

    // Expected moments read straight off the raw head layout.
    std::vector<double> mean(dim), var(dim);
    if (v == VariantKind::original || v == VariantKind::naive_spatial) {
      for (std::size_t k = 0; k < dim; ++k) {
        mean[k] = row[k];
        var[k] = std::exp(row[dim + k]);
      }
    } else {
      const std::size_t base = v == VariantKind::mvn_spatial ? n * d * d : 2 * n * d;
      for (std::size_t m = 0; m < n; ++m) {
        std::vector<double> om(d), ps(d);
        for (std::size_t i = 0; i < d; ++i) {
          om[i] = std::exp(row[base + m * d + i]);
          ps[i] = std::exp(row[base + n * d + m * d + i]);
        }
        const auto kd = oracle::dense_kron_diag(om, ps);
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t k = (m * d + i) * d + j;
            var[k] = kd[i * d + j];
            mean[k] = v == VariantKind::mvn_spatial ? row[k] : row[m * d + i] * row[n * d + m * d + j];
          }
      }
    }
    for (std::size_t k = 0; k < dim; ++k) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t b = 0; b < draws; ++b) s1 += z[b * dim + k];
      const double m = s1 / static_cast<double>(draws);
      for (std::size_t b = 0; b < draws; ++b) s2 += (z[b * dim + k] - m) * (z[b * dim + k] - m);
      const double s = s2 / static_cast<double>(draws - 1);
      const double se_mean = std::sqrt(var[k] / static_cast<double>(draws));
      const double se_var = var[k] * std::sqrt(2.0 / static_cast<double>(draws - 1));
      worst_z = std::max({worst_z, std::abs(m - mean[k]) / se_mean, std::abs(s - var[k]) / se_var});
    }
  }
  return {worst_z < 5.0, "worst deviation " + num(worst_z) + " standard errors < 5, 4 variants x 1e5 draws"};
}

Verdict reduction() {
  Rng rng(505);
  double worst = 0.0;
  for (std::size_t c : {1, 5, 81}) {
    const auto mean = normals(rng, c), log_var = uniforms(rng, c, -2.0, 1.0), eps = normals(rng, c);
    const Tensor e_flat(Shape{c}, eps), e_maps(Shape{c, 1, 1}, eps);
    const LatentSample orig = sample_diag_gaussian({Tensor(Shape{c}, mean), Tensor(Shape{c}, log_var)}, e_flat);
    const double kl_orig = kl_to_standard_normal(Tensor(Shape{c}, mean), Tensor(Shape{c}, log_var)).item();

    auto compare = [&](const Tensor& z, double kl) {
      for (std::size_t k = 0; k < c; ++k) worst = std::max(worst, std::abs(z[k] - orig.z[k]));
      worst = std::max(worst, std::abs(kl - kl_orig));
    };
    // Naive: the same draw viewed as N = C maps of size 1 x 1.
    compare(sample_diag_gaussian({Tensor(Shape{c, 1, 1}, mean), Tensor(Shape{c, 1, 1}, log_var)}, e_maps).z,
            kl_to_standard_normal(DiagonalGaussianParams{Tensor(Shape{c, 1, 1}, mean), Tensor(Shape{c, 1, 1}, log_var)})
                .item());
    // Matched parameters: the log-variance split evenly between the two factors.
    std::vector<double> half(c), ones(c, 1.0);
    for (std::size_t k = 0; k < c; ++k) half[k] = 0.5 * log_var[k];
    const MvnFeatureMapParams mvn{Tensor(Shape{c, 1, 1}, mean), Tensor(Shape{c, 1}, half), Tensor(Shape{c, 1}, half)};
    compare(sample_mvn(mvn, e_maps).z, kl_to_standard_normal(mvn).item());
    const LowRankMvnParams low{Tensor(Shape{c, 1}, mean), Tensor(Shape{c, 1}, ones), Tensor(Shape{c, 1}, half),
                               Tensor(Shape{c, 1}, half)};
    compare(sample_lowrank_mvn(low, e_maps).z, kl_to_standard_normal(low).item());
  }
  return {worst <= 1e-12, "max abs difference in z and KL " + num(worst) + " <= 1e-12, C = 1, 5, 81"};
}

// Central differences written out here rather than through the library's
// checker, so the analytic gradient is compared against a separate route.
Verdict gradient_correctness() {
  Rng rng(606);
  double worst = 0.0;
  std::size_t coords = 0;
  for (VariantKind v : kAllVariants) {
    const Model model(tiny_config(v, 2, 2, 8), rng.next_u64());
    std::vector<double> px(2 * 16);
    for (auto& p : px) p = rng.uniform();
    const Tensor x(Shape{2, 1, 4, 4}, px);
    const std::uint64_t draw = rng.next_u64();
    auto loss = [&] {
      Rng r(draw);
      return ops::scale(model.elbo(x, r).elbo, -1.0);
    };
    std::vector<Tensor> params = model.parameters();
    for (auto& p : params) p.zero_grad();
    loss().backward();
    const double h = 1e-5;
    for (auto& p : params) {
      const auto g = p.grad();
      const std::vector<double> analytic(g.begin(), g.end());
      for (std::size_t k = 0; k < p.numel(); ++k) {
        const double saved = p.data()[k];
        double up, down;
        {
          NoGradGuard guard;
          p.data()[k] = saved + h;
          up = loss().item();
          p.data()[k] = saved - h;
          down = loss().item();
        }
        p.data()[k] = saved;
        const double numeric = (up - down) / (2 * h);
        const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-12});
        worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
        ++coords;
      }
    }
  }
  return {worst < 1e-4, "max relative error " + num(worst) + " < 1e-4 over " + std::to_string(coords) +
                            " coordinates, 4 variants"};
}

Verdict elbo_bound() {
  // 1 x 1 x 2 images, two latent dimensions.
  ModelConfig cfg;
  cfg.variant = VariantKind::original;
  cfg.d = 1;
  cfg.n_maps = 4;
  cfg.latent_dim = 2;
  cfg.image = {1, 1, 2};
  cfg.likelihood_sigma = 0.3;
  cfg.decoder_hidden = 8;
  cfg.encoder_layers = {};
  cfg.decoder_layers = {{LayerKind::conv2d_transpose, 1, 2, 1, 0, 0}};
  const Model model(cfg, 77);
  const Tensor x(Shape{1, 1, 1, 2}, {0.8, 0.25});

  NoGradGuard guard;
  const double sigma = cfg.likelihood_sigma;
  const double log_norm = -std::log(2 * std::numbers::pi * sigma * sigma);  // D = 2
  auto log_lik = [&](const Tensor& x_hat, std::size_t b) {
    const double a = x[0] - x_hat[b * 2], c = x[1] - x_hat[b * 2 + 1];
    return -(a * a + c * c) / (2 * sigma * sigma) + log_norm;
  };

  // Exact log p(x) by quadrature of p(x | z) p(z) over z in R^2.
  const double exact = oracle::log_integral_2d(
      [&](const std::vector<double>& z) {
        const std::size_t p = z.size() / 2;
        const Tensor x_hat = model.decode(Tensor(Shape{p, 2}, z));
        std::vector<double> out(p);
        for (std::size_t b = 0; b < p; ++b) {
          out[b] = log_lik(x_hat, b) - std::log(2 * std::numbers::pi) -
                   0.5 * (z[2 * b] * z[2 * b] + z[2 * b + 1] * z[2 * b + 1]);
        }
        return out;
      },
      8.0, 801);

  // Monte-Carlo ELBO: 1e4 posterior draws, analytic KL.
  const std::size_t draws = 10000;
  std::vector<double> rep(draws * 2);
  for (std::size_t b = 0; b < draws; ++b) rep[2 * b] = x[0], rep[2 * b + 1] = x[1];
  const EncoderOutput enc = model.encode(Tensor(Shape{draws, 1, 1, 2}, rep));
  Rng rng(9);
  const Tensor x_hat = model.decode(model.reparameterize(enc.params, rng).z);
  const auto& diag = std::get<DiagonalGaussianParams>(enc.params);
  const double kl = kl_to_standard_normal(std::span(diag.mean.data().data(), 2), std::span(diag.log_var.data().data(), 2));
  std::vector<double> per_draw(draws);
  for (std::size_t b = 0; b < draws; ++b) per_draw[b] = log_lik(x_hat, b) - kl;
  const double n = static_cast<double>(draws);
  double elbo = 0.0, ss = 0.0;
  for (double e : per_draw) elbo += e / n;
  for (double e : per_draw) ss += (e - elbo) * (e - elbo);
  const double se = std::sqrt(ss / (n - 1) / n);
  const double margin = exact - elbo;
  // The decoder must actually depend on z, otherwise the bound is trivially tight.
  return {se > 1e-6 && margin >= -3.0 * se, "log p(x) " + num(exact) + " - ELBO " + num(elbo) + " = " + num(margin) +
                                   " >= -3 SE (" + num(-3.0 * se) + ", SE > 1e-6)"};
}

Verdict parzen_estimator() {
  const std::size_t dim = 4;
  const double mu = -0.2, sd = 1.0;
  auto gauss = [&](std::size_t n, Rng& rng) {
    std::vector<double> v(n * dim);
    for (auto& e : v) e = mu + sd * rng.normal();
    return Tensor(Shape{n, dim}, std::move(v));
  };
  Rng data_rng(808);
  const Tensor valid = gauss(1000, data_rng), test = gauss(1000, data_rng);
  ParzenConfig cfg;
  cfg.seed = 8;
  cfg.sigma_grid = log_spaced_grid(0.05, 2.0, 30);
  const ParzenReport r = evaluate_parzen(Sampler(gauss), valid, test, cfg);
  const double truth = -0.5 * dim * std::log(2 * std::numbers::pi * sd * sd) - 0.5 * dim;
  const double gap = std::abs(r.mean_log_likelihood - truth);

  Rng rng(809);
  double worst = 0.0;
  for (std::size_t n = 1; n <= 100; n += 9) {
    const Tensor samples = gauss(n, rng);
    std::vector<std::vector<double>> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i].assign(samples.data().begin() + i * dim, samples.data().begin() + (i + 1) * dim);
    for (double sigma : {0.4, 1.0, 3.0}) {
      const auto x = normals(rng, dim);
      const double want = oracle::direct_parzen(x, rows, sigma);
      worst = std::max(worst, std::abs(parzen_log_density(x, samples, sigma) - want));
    }
  }
  return {gap <= 2.0 * r.std_error && worst <= 1e-10,
          "|estimate - truth| " + num(gap) + " <= 2 SE (" + num(2.0 * r.std_error) + "); direct-sum error " +
              num(worst) + " <= 1e-10"};
}

Verdict training_dynamics() {
  const Dataset data = load_mnist_dir(SVAE_DATA_DIR, Split::train).slice(0, 2000);
  Model model(mnist_config(VariantKind::lowrank_mvn_spatial, 3, 16, 81), 2024);
  const double before = reconstruction_mse(model, data, 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 64;
  cfg.seed = 2024;
  const auto reports = train(model, data, cfg);
  const double after = reconstruction_mse(model, data, 1);
  bool increasing = true;
  std::string elbos;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    elbos += num(reports[i].mean_elbo) + (i + 1 < reports.size() ? " < " : "");
    if (i > 0) increasing = increasing && reports[i].mean_elbo > reports[i - 1].mean_elbo;
  }
  const double drop = (before - after) / before;
  return {increasing && drop >= 0.30, "ELBO " + elbos + "; MSE " + num(before) + " -> " + num(after) +
                                          " (drop " + num(100 * drop) + "% >= 30%)"};
}

Verdict timing_harness() {
  const Dataset data = load_mnist_dir(SVAE_DATA_DIR, Split::train).slice(0, 2000);
  std::vector<Model> models;
  for (VariantKind v : kAllVariants) models.emplace_back(mnist_config(v, 3, 64, 81), 5);
  BenchConfig cfg;
  cfg.n_generate = 10000;
  cfg.train.seed = 5;
  const auto r = bench(models, data, cfg);
  const double orig = r[0].train_epoch_seconds, naive = r[1].train_epoch_seconds,
               mvn = r[2].train_epoch_seconds, low = r[3].train_epoch_seconds;
  const bool order = orig <= low && low <= mvn && mvn <= naive;
  double lo = r[0].generate_seconds, hi = lo;
  bool no_encoder = true;
  for (std::size_t i = 0; i < r.size(); ++i) {
    lo = std::min(lo, r[i].generate_seconds);
    hi = std::max(hi, r[i].generate_seconds);
    // 31 training batches; generation must not add encoder calls.
    no_encoder = no_encoder && models[i].encode_calls() == data.size() / cfg.train.batch_size;
  }
  const double spread = (hi - lo) / lo;
  return {order && spread <= 0.15 && no_encoder,
          "epoch s original " + num(orig) + " <= lowrank " + num(low) + " <= mvn " + num(mvn) + " <= naive " +
              num(naive) + "; generation spread " + num(100 * spread) + "% <= 15%"};
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(SVAE_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "svae_acceptance_determinism";
  fs::remove_all(root);
  const std::string common = std::string(" --data-dir ") + SVAE_DATA_DIR +
                             " --n-maps 16 --limit 256 --epochs 2 --batch-size 32 --seed 11";
  for (const char* run : {"a", "b"}) {
    if (run_cli("train" + common + " --out " + (root / run).string()) != 0) return {false, "train failed"};
    if (run_cli("generate --count 100 --rows 8 --seed 12 --checkpoint " + (root / run / "svae_final.ckpt").string() +
                " --out " + (root / run / "gen").string()) != 0)
      return {false, "generate failed"};
  }
  std::size_t compared = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), root / "a");
    if (rel.filename() == "timing.log") continue;  // wall-clock seconds by design
    ++compared;
    if (slurp(entry.path()) != slurp(root / "b" / rel)) ++differing;
  }
  const bool have_pngs = fs::exists(root / "a" / "gen" / "generated_0001.png") &&
                         fs::exists(root / "a" / "samples_epoch_0002.png");
  return {differing == 0 && compared == 6 && have_pngs,
          std::to_string(compared) + " artifacts (logs, PNGs, checkpoints) compared, " + std::to_string(differing) +
              " differ"};
}

}  // namespace

int main() {
  report(1, "kronecker identity", 5, kronecker_identity);
  report(2, "encoder output counts", 0, head_widths);
  report(3, "KL vs Monte Carlo", 30, kl_correctness);
  report(4, "reparameterization moments", 60, sampler_moments);
  report(5, "reduction to the original VAE", 0, reduction);
  report(6, "ELBO gradient check", 60, gradient_correctness);
  report(7, "ELBO <= exact log-likelihood", 0, elbo_bound);
  report(8, "Parzen estimator", 0, parzen_estimator);
  report(9, "desk-scale training dynamics", 600, training_dynamics);
  report(10, "timing harness", 0, timing_harness);
  report(11, "determinism", 0, determinism);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
