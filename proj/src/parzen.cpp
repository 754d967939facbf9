#include "svae/parzen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <json.hpp>

#include "svae/errors.hpp"
#include "svae/parallel.hpp"

namespace svae {

namespace {

std::size_t point_count(const Tensor& t) { return t.rank() == 0 ? 0 : t.dim(0); }

std::size_t point_dim(const Tensor& t) {
  const std::size_t n = point_count(t);
  return n == 0 ? 0 : t.numel() / n;
}

void squared_distances(std::span<const double> x, const Tensor& samples, std::vector<double>& out) {
  const std::size_t n = point_count(samples), dim = point_dim(samples);
  const double* s = samples.data().data();
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const double* row = s + i * dim;
    for (std::size_t k = 0; k < dim; ++k) {
      const double diff = x[k] - row[k];
      acc += diff * diff;
    }
    out[i] = acc;
  }
}

void check_sets(const Tensor& points, const Tensor& samples, const char* what) {
  if (point_count(samples) == 0) throw ContractError(std::string(what) + ": no model samples");
  if (point_count(points) == 0) throw ContractError(std::string(what) + ": no evaluation points");
  if (point_dim(points) != point_dim(samples)) {
    throw DimensionError(std::string(what) + ": points have dimension " +
                         std::to_string(point_dim(points)) + " but samples have " +
                         std::to_string(point_dim(samples)));
  }
}

}  // namespace

std::vector<double> log_spaced_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi >= lo) || count == 0) {
    throw ContractError("log_spaced_grid needs 0 < lo <= hi and count > 0");
  }
  std::vector<double> g(count);
  if (count == 1) {
    g[0] = lo;
    return g;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  g.back() = hi;
  return g;
}

void ParzenConfig::validate() const {
  if (sigma_grid.empty()) throw ContractError("sigma grid is empty");
  for (double s : sigma_grid) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ContractError("sigma grid values must be > 0");
  }
  if (n_model_samples == 0) throw ContractError("n_model_samples must be > 0");
}

std::string to_json(const ParzenReport& r) {
  nlohmann::ordered_json j;
  j["event"] = "parzen";
  j["chosen_sigma"] = r.chosen_sigma;
  j["mean_log_likelihood"] = r.mean_log_likelihood;
  j["std_error"] = r.std_error;
  j["n_test"] = r.n_test;
  j["n_model_samples"] = r.n_model_samples;
  return j.dump();
}

double parzen_log_density_from_sq(std::span<const double> sq_dists, std::size_t dim, double sigma) {
  if (sq_dists.empty()) throw ContractError("parzen_log_density: empty sample set");
  if (!(sigma > 0.0)) throw ContractError("parzen_log_density: sigma must be > 0");
  const double inv = -1.0 / (2.0 * sigma * sigma);
  double top = -std::numeric_limits<double>::infinity();
  for (double sq : sq_dists) top = std::max(top, sq * inv);
  double acc = 0.0;
  for (double sq : sq_dists) acc += std::exp(sq * inv - top);
  const double n = static_cast<double>(sq_dists.size());
  return top + std::log(acc) - std::log(n) -
         0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * sigma * sigma);
}

double parzen_log_density(std::span<const double> x, const Tensor& samples, double sigma) {
  if (point_count(samples) == 0) throw ContractError("parzen_log_density: empty sample set");
  if (x.size() != point_dim(samples)) {
    throw DimensionError("parzen_log_density: point has dimension " + std::to_string(x.size()) +
                         " but samples have " + std::to_string(point_dim(samples)));
  }
  std::vector<double> sq;
  squared_distances(x, samples, sq);
  return parzen_log_density_from_sq(sq, x.size(), sigma);
}

namespace {

// Row-major [n_points, grid] table of log densities. Each point's distances
// are computed once and reused across the grid.
std::vector<double> log_density_table(const Tensor& points, const Tensor& samples,
                                      std::span<const double> grid) {
  const std::size_t n = point_count(points), dim = point_dim(points), g = grid.size();
  std::vector<double> table(n * g);
  const double* p = points.data().data();
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> sq;
    squared_distances({p + i * dim, dim}, samples, sq);
    for (std::size_t s = 0; s < g; ++s) table[i * g + s] = parzen_log_density_from_sq(sq, dim, grid[s]);
  });
  return table;
}

}  // namespace

std::vector<double> mean_log_density_per_sigma(const Tensor& points, const Tensor& samples,
                                               std::span<const double> grid) {
  check_sets(points, samples, "mean_log_density_per_sigma");
  const std::size_t n = point_count(points), g = grid.size();
  const auto table = log_density_table(points, samples, grid);
  std::vector<double> mean(g, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < g; ++s) mean[s] += table[i * g + s];
  for (double& m : mean) m /= static_cast<double>(n);
  return mean;
}

double cross_validate_sigma(const Tensor& valid, const Tensor& samples,
                            std::span<const double> grid) {
  if (grid.empty()) throw ContractError("cross_validate_sigma: empty sigma grid");
  const auto scores = mean_log_density_per_sigma(valid, samples, grid);
  std::size_t best = 0;
  for (std::size_t s = 1; s < grid.size(); ++s) {
    if (scores[s] > scores[best] || (scores[s] == scores[best] && grid[s] < grid[best])) best = s;
  }
  return grid[best];
}

ParzenReport evaluate_parzen(const Sampler& sampler, const Tensor& valid, const Tensor& test,
                             const ParzenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const Tensor samples = sampler(cfg.n_model_samples, rng);
  if (point_count(samples) != cfg.n_model_samples) {
    throw DimensionError("sampler returned " + std::to_string(point_count(samples)) +
                         " points, expected " + std::to_string(cfg.n_model_samples));
  }

  Tensor v = valid;
  if (cfg.n_valid > 0 && cfg.n_valid < point_count(valid)) {
    const std::size_t dim = point_dim(valid);
    v = Tensor(Shape{cfg.n_valid, dim},
               std::vector<double>(valid.data().begin(),
                                   valid.data().begin() + static_cast<std::ptrdiff_t>(cfg.n_valid * dim)));
  }
  ParzenReport r;
  r.chosen_sigma = cross_validate_sigma(v, samples, cfg.sigma_grid);

  check_sets(test, samples, "evaluate_parzen");
  const double sigma[] = {r.chosen_sigma};
  const auto ll = log_density_table(test, samples, sigma);
  const double n = static_cast<double>(ll.size());
  double sum = 0.0;
  for (double x : ll) sum += x;
  r.mean_log_likelihood = sum / n;
  double ss = 0.0;
  for (double x : ll) ss += (x - r.mean_log_likelihood) * (x - r.mean_log_likelihood);
  r.std_error = ll.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
  r.n_test = ll.size();
  r.n_model_samples = cfg.n_model_samples;
  return r;
}

ParzenReport evaluate_parzen(const Model& model, const Tensor& valid, const Tensor& test,
                             const ParzenConfig& cfg) {
  const Sampler sampler = [&model](std::size_t count, Rng& rng) {
    const std::size_t chunk = 500;
    const std::size_t per = model.config().image.numel();
    std::vector<double> values;
    values.reserve(count * per);
    for (std::size_t done = 0; done < count; done += chunk) {
      const Tensor x = model.generate(std::min(chunk, count - done), rng);
      values.insert(values.end(), x.data().begin(), x.data().end());
    }
    return Tensor(Shape{count, per}, std::move(values));
  };
  return evaluate_parzen(sampler, valid, test, cfg);
}

Dataset validation_split(const Dataset& train, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("validation fraction must be in (0, 1]");
  const std::size_t n = train.size();
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  if (k == 0) throw ContractError("validation split is empty");
  return train.slice(n - k, k);
}

}  // namespace svae
