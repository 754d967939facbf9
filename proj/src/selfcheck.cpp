#include "svae/selfcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>

#include "svae/errors.hpp"
#include "svae/gradcheck.hpp"
#include "svae/latent.hpp"
#include "svae/model.hpp"
#include "svae/ops.hpp"
#include "svae/parzen.hpp"
#include "svae/rng.hpp"

namespace svae {

namespace {

struct Outcome {
  double metric = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

using Suite = std::function<Outcome(Rng&, bool fault)>;

std::vector<double> randn(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

Tensor randn_tensor(Rng& rng, const Shape& shape, double scale = 1.0) {
  return Tensor(shape, randn(rng, shape_numel(shape), scale));
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

Outcome head_widths(Rng&, bool fault) {
  const std::size_t got[] = {param_count(VariantKind::original, 3, 64, 81),
                             param_count(VariantKind::naive_spatial, 3, 64, 81),
                             param_count(VariantKind::mvn_spatial, 3, 64, 81),
                             param_count(VariantKind::lowrank_mvn_spatial, 3, 64, 81)};
  const std::size_t want[] = {162, 1152, 960, 768};
  double mismatches = fault ? 1.0 : 0.0;
  std::ostringstream os;
  for (int i = 0; i < 4; ++i) {
    if (got[i] != want[i]) ++mismatches;
    os << (i ? "/" : "") << got[i];
  }
  return {mismatches, 0.5, os.str()};
}

Outcome kronecker(Rng& rng, bool fault) {
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.next_u64() % 16;
    const auto a = randn(rng, d), b = randn(rng, d);
    auto got = kron_diag(a, b);
    if (fault) got[0] += 1e-6;
    // Dense diag(a) (x) diag(b): entry (i*d + j, k*d + l) = A[i][k] * B[j][l].
    const std::size_t n = d * d;
    std::vector<double> dense(n * n, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t j = 0; j < d; ++j)
          for (std::size_t l = 0; l < d; ++l) {
            const double aik = i == k ? a[i] : 0.0, bjl = j == l ? b[j] : 0.0;
            dense[(i * d + j) * n + (k * d + l)] = aik * bjl;
          }
    for (std::size_t r = 0; r < n; ++r) worst = std::max(worst, std::abs(got[r] - dense[r * n + r]));
  }
  return {worst, 1e-12, "200 random pairs, d in 1..16"};
}

Outcome kl_monte_carlo(Rng& rng, bool fault) {
  const std::size_t dims = 8, draws = 200000;
  const std::vector<double> zeros(dims, 0.0);
  double worst = kl_to_standard_normal(zeros, zeros) == 0.0 ? 0.0 : 1.0;
  for (int set = 0; set < 4; ++set) {
    const auto mean = randn(rng, dims, 0.7);
    const auto log_var = randn(rng, dims, 0.5);
    double closed = kl_to_standard_normal(mean, log_var);
    if (fault) closed *= 1.1;
    double acc = 0.0;
    for (std::size_t s = 0; s < draws; ++s) {
      double log_ratio = 0.0;
      for (std::size_t i = 0; i < dims; ++i) {
        const double eps = rng.normal();
        const double z = mean[i] + std::exp(0.5 * log_var[i]) * eps;
        // log q(z) - log p(z); the 2 pi terms cancel.
        log_ratio += -0.5 * log_var[i] - 0.5 * eps * eps + 0.5 * z * z;
      }
      acc += log_ratio;
    }
    const double mc = acc / static_cast<double>(draws);
    worst = std::max(worst, std::abs(closed - mc) / std::abs(mc));
  }
  return {worst, 0.02, "relative error vs 2e5-draw estimate, 4 sets of 8 dims"};
}

Outcome sampler_moments(Rng& rng, bool fault) {
  const std::size_t d = 3, draws = 20000;
  double worst = 0.0;
  auto update = [&](const std::vector<double>& mean, const std::vector<double>& var,
                    const std::function<Tensor(const Tensor& eps)>& draw) {
    const std::size_t k = mean.size();
    std::vector<double> s1(k, 0.0), s2(k, 0.0);
    Shape shape{draws, k};
    const Tensor eps = standard_normal(shape, rng);
    Tensor z = draw(eps);
    for (std::size_t n = 0; n < draws; ++n)
      for (std::size_t i = 0; i < k; ++i) {
        double v = z[n * k + i];
        if (fault) v = mean[i] + 1.1 * (v - mean[i]);
        s1[i] += v;
        s2[i] += (v - mean[i]) * (v - mean[i]);
      }
    const double n = static_cast<double>(draws);
    for (std::size_t i = 0; i < k; ++i) {
      const double m = s1[i] / n, v = s2[i] / n - (m - mean[i]) * (m - mean[i]);
      worst = std::max(worst, std::abs(m - mean[i]) / std::sqrt(var[i] / n));
      worst = std::max(worst, std::abs(v - var[i]) / (var[i] * std::sqrt(2.0 / n)));
    }
  };

  // Diagonal Gaussian (original and naive share this sampler).
  {
    const auto mean = randn(rng, d * d), log_var = randn(rng, d * d, 0.5);
    std::vector<double> var(d * d);
    for (std::size_t i = 0; i < var.size(); ++i) var[i] = std::exp(log_var[i]);
    update(mean, var, [&](const Tensor& eps) {
      DiagonalGaussianParams p{Tensor(Shape{draws, d * d}), Tensor(Shape{draws, d * d})};
      for (std::size_t n = 0; n < draws; ++n)
        for (std::size_t i = 0; i < d * d; ++i) {
          p.mean.data()[n * d * d + i] = mean[i];
          p.log_var.data()[n * d * d + i] = log_var[i];
        }
      return sample_diag_gaussian(p, eps).z;
    });
  }
  // MVN and low-rank MVN share the Kronecker-diagonal variance.
  for (bool lowrank : {false, true}) {
    const auto lo = randn(rng, d, 0.4), lp = randn(rng, d, 0.4);
    const auto mu = randn(rng, d), nu = randn(rng, d);
    const auto full = randn(rng, d * d);
    const auto mean = lowrank ? mean_matrix(mu, nu) : full;
    std::vector<double> om(d), ps(d);
    for (std::size_t i = 0; i < d; ++i) om[i] = std::exp(lo[i]), ps[i] = std::exp(lp[i]);
    const auto var = kron_diag(om, ps);
    auto tile = [&](const std::vector<double>& v, Shape shape) {
      std::vector<double> out;
      for (std::size_t n = 0; n < draws; ++n) out.insert(out.end(), v.begin(), v.end());
      return Tensor(std::move(shape), std::move(out));
    };
    update(mean, var, [&](const Tensor& eps) {
      const Tensor e = ops::reshape(eps, {draws, d, d});
      Tensor z = lowrank ? sample_lowrank_mvn({tile(mu, {draws, d}), tile(nu, {draws, d}),
                                               tile(lo, {draws, d}), tile(lp, {draws, d})},
                                              e)
                                 .z
                         : sample_mvn({tile(full, {draws, d, d}), tile(lo, {draws, d}),
                                       tile(lp, {draws, d})},
                                      e)
                               .z;
      return ops::reshape(z, {draws, d * d});
    });
  }
  return {worst, 5.0, "max |z-score| of mean and variance, 2e4 draws"};
}

Outcome reduction(Rng& rng, bool fault) {
  const std::size_t c = 12;
  const Tensor mu = randn_tensor(rng, {c, 1}), nu = randn_tensor(rng, {c, 1});
  const Tensor lo = randn_tensor(rng, {c, 1}, 0.5), lp = randn_tensor(rng, {c, 1}, 0.5);
  const Tensor eps = randn_tensor(rng, {c, 1, 1});

  const Tensor mean = ops::reshape(mean_matrix(mu, nu), {c});
  const Tensor log_var = ops::add(ops::reshape(lo, {c}), ops::reshape(lp, {c}));
  const DiagonalGaussianParams diag{mean, log_var};
  const LatentSample orig = sample_diag_gaussian(diag, ops::reshape(eps, {c}));

  const MvnFeatureMapParams mvn{ops::reshape(mean, {c, 1, 1}), lo, lp};
  const LowRankMvnParams lr{mu, nu, lo, lp};
  const LatentSample a = sample_mvn(mvn, eps);
  const LatentSample b = sample_lowrank_mvn(lr, eps);

  double worst = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    worst = std::max(worst, std::abs(a.z[i] - orig.z[i]));
    worst = std::max(worst, std::abs(b.z[i] - orig.z[i]));
  }
  const double k0 = kl_to_standard_normal(diag).item();
  worst = std::max(worst, std::abs(kl_to_standard_normal(mvn).item() - k0));
  worst = std::max(worst, std::abs(kl_to_standard_normal(lr).item() - k0));
  if (fault) worst += 1e-9;
  return {worst, 1e-12, "d = 1, N = 12 against the diagonal sampler"};
}

// out[b,o,y,x] = bias[o] + sum_{c,i,j} in[b,c,y*s+i-p,x*s+j-p] * w[o,c,i,j]
Tensor direct_conv(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t s,
                   std::size_t p) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), k = w.dim(2);
  const std::size_t Ho = (H + 2 * p - k) / s + 1, Wo = (W + 2 * p - k) / s + 1;
  Tensor out(Shape{B, O, Ho, Wo});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t xx = 0; xx < Wo; ++xx) {
          double acc = bias.numel() ? bias[o] : 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long yy = static_cast<long>(y * s + i) - static_cast<long>(p);
                const long xc = static_cast<long>(xx * s + j) - static_cast<long>(p);
                if (yy < 0 || xc < 0 || yy >= static_cast<long>(H) || xc >= static_cast<long>(W)) continue;
                acc += x[((b * C + c) * H + yy) * W + xc] * w[((o * C + c) * k + i) * k + j];
              }
          out.data()[((b * O + o) * Ho + y) * Wo + xx] = acc;
        }
  return out;
}

struct ConvCase {
  std::size_t cin, cout, h, k, s, p;
};

const ConvCase kConvCases[] = {{1, 32, 28, 3, 2, 1}, {32, 8, 14, 3, 2, 1}, {2, 3, 5, 3, 1, 0},
                               {3, 4, 9, 4, 3, 0},   {4, 2, 9, 4, 2, 1},  {2, 2, 7, 1, 1, 0}};

Outcome conv_oracle(Rng& rng, bool fault) {
  double worst = 0.0;
  for (const auto& c : kConvCases) {
    const Tensor x = randn_tensor(rng, {2, c.cin, c.h, c.h});
    const Tensor w = randn_tensor(rng, {c.cout, c.cin, c.k, c.k});
    const Tensor b = randn_tensor(rng, {c.cout});
    const Tensor got = ops::conv2d(x, w, b, c.s, c.p);
    const Tensor want = direct_conv(x, w, b, c.s, c.p);
    for (std::size_t i = 0; i < got.numel(); ++i) {
      const double g = fault && i == 0 ? got[i] * 1.001 : got[i];
      worst = std::max(worst, std::abs(g - want[i]));
    }
  }
  return {worst, 1e-10, "conv2d vs nested loops, 6 geometries"};
}

Outcome adjointness(Rng& rng, bool fault) {
  double worst = 0.0;
  for (const auto& c : kConvCases) {
    const Tensor u = randn_tensor(rng, {2, c.cin, c.h, c.h});
    const Tensor w = randn_tensor(rng, {c.cout, c.cin, c.k, c.k});
    const Tensor none;
    const Tensor cu = ops::conv2d(u, w, none, c.s, c.p);
    const Tensor v = randn_tensor(rng, cu.shape());
    const std::size_t ho = cu.dim(2);
    const std::size_t op = c.h - ((ho - 1) * c.s + c.k - 2 * c.p);
    Tensor tv = ops::conv2d_transpose(v, w, none, c.s, c.p, op);
    const double lhs = dot(cu, v), rhs = dot(u, tv) * (fault ? 1.001 : 1.0);
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
  }
  return {worst, 1e-10, "<conv(u), v> vs <u, conv^T(v)>, 6 geometries"};
}

Outcome gradients(Rng& rng, bool fault) {
  double worst = 0.0;
  std::ostringstream os;
  for (auto v : kAllVariants) {
    const Model model(tiny_config(v), rng.next_u64());
    const Tensor x(Shape{3, 1, 4, 4}, [&] {
      std::vector<double> px(48);
      for (auto& p : px) p = rng.uniform();
      return px;
    }());
    const std::uint64_t draw = rng.next_u64();
    auto loss = [&] {
      Rng r(draw);
      return ops::scale(model.elbo(x, r).elbo, -1.0);
    };
    GradCheckOptions opts;
    if (fault) {
      opts.tamper = [](std::vector<Tensor>& g) {
        for (auto& t : g) {
          for (auto& e : t.data()) e *= 1.5;
        }
      };
    }
    const auto r = finite_difference_check(loss, model.parameters(), 1e-5, opts);
    worst = std::max(worst, r.max_relative_error);
    os << to_string(v) << "=" << r.coords_checked << " ";
  }
  return {worst, 1e-4, "max relative error, coords " + os.str()};
}

Outcome parzen(Rng& rng, bool fault) {
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.next_u64() % 100, dim = 1 + rng.next_u64() % 6;
    const double sigma = 0.5 + rng.uniform();
    const Tensor samples = randn_tensor(rng, {n, dim});
    const auto x = randn(rng, dim);
    double direct = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double sq = 0.0;
      for (std::size_t k = 0; k < dim; ++k) sq += (x[k] - samples[i * dim + k]) * (x[k] - samples[i * dim + k]);
      direct += std::exp(-sq / (2 * sigma * sigma)) *
                std::pow(2 * std::numbers::pi * sigma * sigma, -0.5 * static_cast<double>(dim));
    }
    direct = std::log(direct / static_cast<double>(n));
    double got = parzen_log_density(x, samples, sigma);
    if (fault) got += 1e-6;
    worst = std::max(worst, std::abs(got - direct));
  }
  return {worst, 1e-10, "log-sum-exp vs direct sum, n <= 100"};
}

struct NamedSuite {
  const char* name;
  Suite run;
};

const std::vector<NamedSuite>& suites() {
  static const std::vector<NamedSuite> all = {
      {"head-widths", head_widths}, {"kronecker", kronecker},   {"kl-monte-carlo", kl_monte_carlo},
      {"sampler-moments", sampler_moments}, {"reduction", reduction}, {"conv-oracle", conv_oracle},
      {"adjointness", adjointness}, {"gradients", gradients},   {"parzen", parzen}};
  return all;
}

}  // namespace

std::vector<std::string> self_check_suites() {
  std::vector<std::string> names;
  for (const auto& s : suites()) names.push_back(s.name);
  return names;
}

std::vector<SuiteResult> run_self_check(const SelfCheckOptions& options) {
  if (!options.inject_fault.empty()) {
    const auto names = self_check_suites();
    if (std::find(names.begin(), names.end(), options.inject_fault) == names.end()) {
      throw ContractError("unknown suite '" + options.inject_fault + "' for fault injection");
    }
  }
  std::vector<SuiteResult> out;
  for (std::size_t i = 0; i < suites().size(); ++i) {
    const auto& s = suites()[i];
    Rng rng(mix_seed(options.seed, i));
    SuiteResult r;
    r.name = s.name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const Outcome o = s.run(rng, options.inject_fault == s.name);
      r.metric = o.metric;
      r.tolerance = o.tolerance;
      r.detail = o.detail;
      r.passed = std::isfinite(o.metric) && o.metric < o.tolerance;
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(r);
  }
  return out;
}

std::string format_suite_table(const std::vector<SuiteResult>& results) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %-4s %12s %10s %8s  %s\n", "suite", "ok", "metric",
                "tolerance", "seconds", "detail");
  os << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-16s %-4s %12.3e %10.1e %8.2f  %s\n", r.name.c_str(),
                  r.passed ? "PASS" : "FAIL", r.metric, r.tolerance, r.seconds, r.detail.c_str());
    os << line;
  }
  return os.str();
}

}  // namespace svae
