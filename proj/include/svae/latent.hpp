#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "svae/rng.hpp"
#include "svae/tensor.hpp"

namespace svae {

// The four posterior families. Original and NaiveSpatial share the
// diagonal-Gaussian sampler; NaiveSpatial reshapes the draw into N maps.
enum class VariantKind { original, naive_spatial, mvn_spatial, lowrank_mvn_spatial };

inline constexpr VariantKind kAllVariants[] = {VariantKind::original, VariantKind::naive_spatial,
                                               VariantKind::mvn_spatial,
                                               VariantKind::lowrank_mvn_spatial};

// CLI names: original, naive, mvn, lowrank-mvn.
std::string to_string(VariantKind v);
VariantKind parse_variant(const std::string& name);

// Encoder output width:
//   original 2C, naive 2 d^2 N, mvn (d^2 + 2d) N, lowrank-mvn 4 d N.
std::size_t param_count(VariantKind v, std::size_t d, std::size_t n_maps, std::size_t latent_dim);

// ---------------------------------------------------------------------------
// Plain-vector math.

// Diagonal of diag(d1) (x) diag(d2): out[i*d + j] = d1[i] * d2[j].
std::vector<double> kron_diag(std::span<const double> d1, std::span<const double> d2);

// Rank-one mean matrix, row-major: out[i*d + j] = mu[i] * nu[j].
std::vector<double> mean_matrix(std::span<const double> mu, std::span<const double> nu);

// KL( prod_i N(mean_i, exp(log_var_i)) || N(0, I) )
//   = 0.5 * sum_i (exp(log_var_i) + mean_i^2 - 1 - log_var_i)
double kl_to_standard_normal(std::span<const double> means, std::span<const double> log_vars);

// ---------------------------------------------------------------------------
// Differentiable forms. All parameter tensors may carry arbitrary leading
// batch axes (e.g. [B, N, d]); the last axis (or last two, for matrices)
// is the distribution's own.

struct DiagonalGaussianParams {
  Tensor mean;     // [..., C]
  Tensor log_var;  // [..., C]
};

struct MvnFeatureMapParams {
  Tensor mean_matrix;     // [..., d, d]
  Tensor log_diag_omega;  // [..., d] row factor
  Tensor log_diag_psi;    // [..., d] column factor
};

struct LowRankMvnParams {
  Tensor mu;              // [..., d]
  Tensor nu;              // [..., d]
  Tensor log_diag_omega;  // [..., d]
  Tensor log_diag_psi;    // [..., d]
};

// z = mean + sqrt(var) * epsilon, elementwise. epsilon is a constant.
struct LatentSample {
  Tensor z;
  Tensor epsilon;
};

Tensor kron_diag(const Tensor& d1, const Tensor& d2);
Tensor mean_matrix(const Tensor& mu, const Tensor& nu);

Tensor standard_normal(const Shape& shape, Rng& rng);

LatentSample sample_diag_gaussian(const DiagonalGaussianParams& p, Rng& rng);
LatentSample sample_diag_gaussian(const DiagonalGaussianParams& p, const Tensor& epsilon);

// z[i,j] = M[i,j] + sqrt(omega[i] * psi[j]) * eps[i,j]
LatentSample sample_mvn(const MvnFeatureMapParams& p, Rng& rng);
LatentSample sample_mvn(const MvnFeatureMapParams& p, const Tensor& epsilon);

// z[i,j] = mu[i] * nu[j] + sqrt(omega[i] * psi[j]) * eps[i,j]
LatentSample sample_lowrank_mvn(const LowRankMvnParams& p, Rng& rng);
LatentSample sample_lowrank_mvn(const LowRankMvnParams& p, const Tensor& epsilon);

// Per-location variances implied by the Kronecker-diagonal covariance.
Tensor mvn_variance(const Tensor& log_diag_omega, const Tensor& log_diag_psi);

// Scalar KL summed over every element. Throws NumericError on non-finite input.
Tensor kl_to_standard_normal(const Tensor& means, const Tensor& log_vars);
Tensor kl_to_standard_normal(const DiagonalGaussianParams& p);
Tensor kl_to_standard_normal(const MvnFeatureMapParams& p);
Tensor kl_to_standard_normal(const LowRankMvnParams& p);

}  // namespace svae
