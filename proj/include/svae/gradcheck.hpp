#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "svae/tensor.hpp"

namespace svae {

struct GradCheckOptions {
  // Coordinates probed per parameter tensor; 0 probes every coordinate.
  std::size_t coords_per_tensor = 0;
  std::uint64_t seed = 0;
  // Applied to the analytic gradients before comparison. Only used for
  // fault-injection (negative control) runs.
  std::function<void(std::vector<Tensor>&)> tamper;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coords_checked = 0;
};

// Compares backward() against central differences
//   (L(p + eps) - L(p - eps)) / (2 eps)
// using |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
// `loss_fn` must be deterministic (reseed any sampling inside it).
// Throws NumericError if the loss is not finite.
GradCheckResult finite_difference_check(const std::function<Tensor()>& loss_fn,
                                        std::vector<Tensor> params, double eps,
                                        const GradCheckOptions& options = {});

}  // namespace svae
