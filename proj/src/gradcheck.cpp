#include "svae/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svae/errors.hpp"
#include "svae/rng.hpp"

namespace svae {

namespace {

double finite_loss(const std::function<Tensor()>& loss_fn) {
  NoGradGuard guard;
  const double v = loss_fn().item();
  if (!std::isfinite(v)) throw NumericError("gradient check: loss is not finite");
  return v;
}

}  // namespace

GradCheckResult finite_difference_check(const std::function<Tensor()>& loss_fn,
                                        std::vector<Tensor> params, double eps,
                                        const GradCheckOptions& options) {
  if (!(eps > 0.0)) throw ContractError("gradient check: eps must be > 0");

  for (auto& p : params) p.zero_grad();
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) throw NumericError("gradient check: loss is not finite");
  loss.backward();

  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    Tensor g(p.shape(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), g.data().begin());
    grads.push_back(g);
  }
  if (options.tamper) options.tamper(grads);

  Rng rng(options.seed);
  GradCheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.coords_per_tensor && coords.size() > options.coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng.engine());
      coords.resize(options.coords_per_tensor);
    }
    for (std::size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = finite_loss(loss_fn);
      values[i] = saved - eps;
      const double down = finite_loss(loss_fn);
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = grads[t][i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
      result.max_relative_error =
          std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
      ++result.coords_checked;
    }
  }
  for (auto& p : params) p.zero_grad();
  return result;
}

}  // namespace svae
