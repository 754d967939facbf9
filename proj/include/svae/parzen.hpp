#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "svae/data.hpp"
#include "svae/model.hpp"
#include "svae/tensor.hpp"

namespace svae {

// `count` values log-spaced over [lo, hi], ascending.
std::vector<double> log_spaced_grid(double lo, double hi, std::size_t count);

struct ParzenConfig {
  std::size_t n_model_samples = 10000;
  std::vector<double> sigma_grid = log_spaced_grid(0.01, 1.0, 20);
  // Validation points used for bandwidth selection; 0 uses all of them.
  std::size_t n_valid = 0;
  std::uint64_t seed = 0;

  // Throws ContractError unless the grid is non-empty and positive.
  void validate() const;
};

struct ParzenReport {
  double chosen_sigma = 0.0;
  double mean_log_likelihood = 0.0;
  double std_error = 0.0;  // sample std / sqrt(n_test)
  std::size_t n_test = 0;
  std::size_t n_model_samples = 0;
};
std::string to_json(const ParzenReport& r);

// Point sets are tensors whose first axis indexes points; the remaining axes
// are flattened into the dimension D.

// log( (1/n) sum_i N(x; s_i, sigma^2 I) ) via log-sum-exp.
double parzen_log_density(std::span<const double> x, const Tensor& samples, double sigma);

// Same, from precomputed squared distances |x - s_i|^2 in dimension `dim`.
double parzen_log_density_from_sq(std::span<const double> sq_dists, std::size_t dim, double sigma);

// Mean log density of every point under each grid sigma, in grid order.
std::vector<double> mean_log_density_per_sigma(const Tensor& points, const Tensor& samples,
                                               std::span<const double> grid);

// Grid sigma with the highest mean validation log density; ties go to the
// smaller sigma.
double cross_validate_sigma(const Tensor& valid, const Tensor& samples,
                            std::span<const double> grid);

// Draws `count` points with the given generator.
using Sampler = std::function<Tensor(std::size_t count, Rng& rng)>;

// Draws cfg.n_model_samples from `sampler`, picks sigma on `valid`, and
// reports the mean test log density with its standard error.
ParzenReport evaluate_parzen(const Sampler& sampler, const Tensor& valid, const Tensor& test,
                             const ParzenConfig& cfg);
// Prior -> decoder samples from `model`.
ParzenReport evaluate_parzen(const Model& model, const Tensor& valid, const Tensor& test,
                             const ParzenConfig& cfg);

// The last ceil(10%) of a training set, used for bandwidth selection.
Dataset validation_split(const Dataset& train, double fraction = 0.1);

}  // namespace svae
