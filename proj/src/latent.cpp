#include "svae/latent.hpp"

#include <cmath>

#include "svae/errors.hpp"
#include "svae/ops.hpp"

namespace svae {

std::string to_string(VariantKind v) {
  switch (v) {
    case VariantKind::original: return "original";
    case VariantKind::naive_spatial: return "naive";
    case VariantKind::mvn_spatial: return "mvn";
    case VariantKind::lowrank_mvn_spatial: return "lowrank-mvn";
  }
  return "?";
}

VariantKind parse_variant(const std::string& name) {
  for (auto v : kAllVariants) {
    if (to_string(v) == name) return v;
  }
  throw ContractError("unknown variant '" + name + "' (expected original, naive, mvn, lowrank-mvn)");
}

std::size_t param_count(VariantKind v, std::size_t d, std::size_t n_maps, std::size_t latent_dim) {
  if (d == 0 || n_maps == 0) throw ContractError("param_count: d and N must be positive");
  switch (v) {
    case VariantKind::original:
      if (latent_dim == 0) throw ContractError("param_count: C must be positive");
      return 2 * latent_dim;
    case VariantKind::naive_spatial: return 2 * d * d * n_maps;
    case VariantKind::mvn_spatial: return (d * d + 2 * d) * n_maps;
    case VariantKind::lowrank_mvn_spatial: return 4 * d * n_maps;
  }
  throw ContractError("param_count: unknown variant");
}

namespace {

void require_equal_length(const char* op, std::size_t a, std::size_t b) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": length mismatch " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

void require_finite(const char* op, const Tensor& t) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite parameter");
  }
}

void require_shape(const char* op, const Tensor& t, const Shape& expected) {
  if (t.shape() != expected) {
    throw DimensionError(std::string(op) + ": expected shape " + shape_str(expected) + ", got " +
                         shape_str(t.shape()));
  }
}

Shape matrix_shape(const Tensor& factor) {
  Shape s = factor.shape();
  s.push_back(s.back());
  return s;
}

LatentSample reparameterize(const Tensor& mean, const Tensor& variance, const Tensor& epsilon) {
  require_shape("reparameterize", epsilon, mean.shape());
  for (double v : variance.data()) {
    if (!std::isfinite(v)) throw NumericError("reparameterize: variance overflow");
  }
  Tensor z = ops::add(mean, ops::mul(ops::sqrt(variance), epsilon));
  return {z, epsilon};
}

}  // namespace

std::vector<double> kron_diag(std::span<const double> d1, std::span<const double> d2) {
  require_equal_length("kron_diag", d1.size(), d2.size());
  const std::size_t d = d1.size();
  std::vector<double> out(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = d1[i] * d2[j];
  return out;
}

std::vector<double> mean_matrix(std::span<const double> mu, std::span<const double> nu) {
  require_equal_length("mean_matrix", mu.size(), nu.size());
  return kron_diag(mu, nu);
}

double kl_to_standard_normal(std::span<const double> means, std::span<const double> log_vars) {
  require_equal_length("kl_to_standard_normal", means.size(), log_vars.size());
  double kl = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    const double m = means[i], lv = log_vars[i];
    if (!std::isfinite(m) || !std::isfinite(lv)) {
      throw NumericError("kl_to_standard_normal: non-finite input at index " + std::to_string(i));
    }
    kl += std::exp(lv) + m * m - 1.0 - lv;
  }
  return 0.5 * kl;
}

Tensor kron_diag(const Tensor& d1, const Tensor& d2) { return ops::outer(d1, d2); }
Tensor mean_matrix(const Tensor& mu, const Tensor& nu) { return ops::outer(mu, nu); }

Tensor standard_normal(const Shape& shape, Rng& rng) {
  Tensor eps(shape);
  for (double& v : eps.data()) v = rng.normal();
  return eps;
}

Tensor mvn_variance(const Tensor& log_diag_omega, const Tensor& log_diag_psi) {
  return kron_diag(ops::exp(log_diag_omega), ops::exp(log_diag_psi));
}

LatentSample sample_diag_gaussian(const DiagonalGaussianParams& p, Rng& rng) {
  return sample_diag_gaussian(p, standard_normal(p.mean.shape(), rng));
}

LatentSample sample_diag_gaussian(const DiagonalGaussianParams& p, const Tensor& epsilon) {
  require_shape("sample_diag_gaussian", p.log_var, p.mean.shape());
  require_finite("sample_diag_gaussian", p.log_var);
  // sqrt(exp(lv)) is evaluated as exp(lv / 2).
  Tensor stddev = ops::exp(ops::scale(p.log_var, 0.5));
  for (double v : stddev.data()) {
    if (!std::isfinite(v)) throw NumericError("sample_diag_gaussian: variance overflow");
  }
  return {ops::add(p.mean, ops::mul(stddev, epsilon)), epsilon};
}

LatentSample sample_mvn(const MvnFeatureMapParams& p, Rng& rng) {
  return sample_mvn(p, standard_normal(p.mean_matrix.shape(), rng));
}

LatentSample sample_mvn(const MvnFeatureMapParams& p, const Tensor& epsilon) {
  require_shape("sample_mvn", p.log_diag_psi, p.log_diag_omega.shape());
  require_shape("sample_mvn", p.mean_matrix, matrix_shape(p.log_diag_omega));
  require_finite("sample_mvn", p.log_diag_omega);
  require_finite("sample_mvn", p.log_diag_psi);
  return reparameterize(p.mean_matrix, mvn_variance(p.log_diag_omega, p.log_diag_psi), epsilon);
}

LatentSample sample_lowrank_mvn(const LowRankMvnParams& p, Rng& rng) {
  return sample_lowrank_mvn(p, standard_normal(matrix_shape(p.mu), rng));
}

LatentSample sample_lowrank_mvn(const LowRankMvnParams& p, const Tensor& epsilon) {
  for (const Tensor* t : {&p.nu, &p.log_diag_omega, &p.log_diag_psi}) {
    require_shape("sample_lowrank_mvn", *t, p.mu.shape());
  }
  return sample_mvn({mean_matrix(p.mu, p.nu), p.log_diag_omega, p.log_diag_psi}, epsilon);
}

Tensor kl_to_standard_normal(const Tensor& means, const Tensor& log_vars) {
  require_shape("kl_to_standard_normal", log_vars, means.shape());
  require_finite("kl_to_standard_normal", means);
  require_finite("kl_to_standard_normal", log_vars);
  // 0.5 * sum(exp(lv) + m^2 - 1 - lv)
  Tensor terms = ops::sub(ops::add(ops::exp(log_vars), ops::square(means)), log_vars);
  return ops::add_scalar(ops::scale(ops::sum(terms), 0.5),
                         -0.5 * static_cast<double>(means.numel()));
}

Tensor kl_to_standard_normal(const DiagonalGaussianParams& p) {
  return kl_to_standard_normal(p.mean, p.log_var);
}

Tensor kl_to_standard_normal(const MvnFeatureMapParams& p) {
  // log diag(Omega (x) Psi) = log omega_i + log psi_j.
  return kl_to_standard_normal(p.mean_matrix, ops::outer_sum(p.log_diag_omega, p.log_diag_psi));
}

Tensor kl_to_standard_normal(const LowRankMvnParams& p) {
  return kl_to_standard_normal(
      MvnFeatureMapParams{mean_matrix(p.mu, p.nu), p.log_diag_omega, p.log_diag_psi});
}

}  // namespace svae
