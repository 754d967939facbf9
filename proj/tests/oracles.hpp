#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library code being checked; everything is brute force.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

#include "svae/tensor.hpp"

namespace oracle {

using svae::Shape;
using svae::Tensor;

// Diagonal of the dense (d^2 x d^2) Kronecker product diag(a) (x) diag(b).
inline std::vector<double> dense_kron_diag(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t d = a.size(), n = d * d;
  std::vector<double> dense(n * n, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t l = 0; l < d; ++l) {
          const double A = i == k ? a[i] : 0.0;
          const double B = j == l ? b[j] : 0.0;
          dense[(i * d + j) * n + (k * d + l)] = A * B;
        }
  std::vector<double> diag(n);
  for (std::size_t r = 0; r < n; ++r) diag[r] = dense[r * n + r];
  return diag;
}

// Windowed dot product, weight [O, C, k, k].
inline Tensor conv2d(const Tensor& x, const Tensor& w, const std::vector<double>& bias,
                     std::size_t s, std::size_t p) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), k = w.dim(2);
  const std::size_t Ho = (H + 2 * p - k) / s + 1, Wo = (W + 2 * p - k) / s + 1;
  Tensor out(Shape{B, O, Ho, Wo});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t xo = 0; xo < Wo; ++xo) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long yy = static_cast<long>(y * s + i) - static_cast<long>(p);
                const long xx = static_cast<long>(xo * s + j) - static_cast<long>(p);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
                acc += x[((b * C + c) * H + yy) * W + xx] * w[((o * C + c) * k + i) * k + j];
              }
          out.data()[((b * O + o) * Ho + y) * Wo + xo] = acc;
        }
  return out;
}

// Scatter form of the transposed convolution, weight [Cin, Cout, k, k].
inline Tensor conv2d_transpose(const Tensor& x, const Tensor& w, const std::vector<double>& bias,
                               std::size_t s, std::size_t p, std::size_t op = 0) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(1), k = w.dim(2);
  const std::size_t Ho = (H - 1) * s + k + op - 2 * p, Wo = (W - 1) * s + k + op - 2 * p;
  Tensor out(Shape{B, O, Ho, Wo});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t xo = 0; xo < Wo; ++xo) out.data()[((b * O + o) * Ho + y) * Wo + xo] = bias.empty() ? 0.0 : bias[o];
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xi = 0; xi < W; ++xi)
          for (std::size_t o = 0; o < O; ++o)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long yy = static_cast<long>(y * s + i) - static_cast<long>(p);
                const long xx = static_cast<long>(xi * s + j) - static_cast<long>(p);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(Ho) || xx >= static_cast<long>(Wo)) continue;
                out.data()[((b * O + o) * Ho + yy) * Wo + xx] +=
                    x[((b * C + c) * H + y) * W + xi] * w[((c * O + o) * k + i) * k + j];
              }
  return out;
}

// log( (1/n) sum_i N(x; s_i, sigma^2 I) ) by summing densities directly.
inline double direct_parzen(const std::vector<double>& x, const std::vector<std::vector<double>>& samples,
                            double sigma) {
  const double dim = static_cast<double>(x.size());
  double acc = 0.0;
  for (const auto& s : samples) {
    double sq = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) sq += (x[k] - s[k]) * (x[k] - s[k]);
    acc += std::exp(-sq / (2 * sigma * sigma)) * std::pow(2 * std::numbers::pi * sigma * sigma, -dim / 2);
  }
  return std::log(acc / static_cast<double>(samples.size()));
}

// Monte-Carlo E_q[log q(z) - log p(z)] for q = prod N(mean_i, exp(log_var_i)),
// p = N(0, I). Returns {estimate, standard error}.
template <typename Normal>
std::pair<double, double> monte_carlo_kl(const std::vector<double>& mean, const std::vector<double>& log_var,
                                         std::size_t draws, Normal&& normal) {
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t n = 0; n < draws; ++n) {
    double r = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double sd = std::exp(0.5 * log_var[i]);
      const double z = mean[i] + sd * normal();
      const double log_q = -0.5 * std::log(2 * std::numbers::pi) - std::log(sd) -
                           0.5 * ((z - mean[i]) / sd) * ((z - mean[i]) / sd);
      const double log_p = -0.5 * std::log(2 * std::numbers::pi) - 0.5 * z * z;
      r += log_q - log_p;
    }
    s1 += r;
    s2 += r * r;
  }
  const double n = static_cast<double>(draws);
  const double m = s1 / n;
  return {m, std::sqrt((s2 / n - m * m) / n)};
}

// log of the integral over R^2 of f(z) dz by the trapezoid rule on
// [-half, half]^2 with `points` nodes per axis; log_f is evaluated in bulk on
// the whole grid (row-major, z = (z0, z1)) and combined with log-sum-exp.
inline double log_integral_2d(const std::function<std::vector<double>(const std::vector<double>&)>& log_f,
                              double half, std::size_t points) {
  const double h = 2 * half / static_cast<double>(points - 1);
  std::vector<double> z(points * points * 2);
  for (std::size_t i = 0; i < points; ++i)
    for (std::size_t j = 0; j < points; ++j) {
      z[(i * points + j) * 2] = -half + h * static_cast<double>(i);
      z[(i * points + j) * 2 + 1] = -half + h * static_cast<double>(j);
    }
  const auto lf = log_f(z);
  double top = -INFINITY;
  for (double v : lf) top = std::max(top, v);
  double acc = 0.0;
  for (std::size_t i = 0; i < points; ++i)
    for (std::size_t j = 0; j < points; ++j) {
      const double wi = (i == 0 || i + 1 == points) ? 0.5 : 1.0;
      const double wj = (j == 0 || j + 1 == points) ? 0.5 : 1.0;
      acc += wi * wj * std::exp(lf[i * points + j] - top);
    }
  return top + std::log(acc * h * h);
}

}  // namespace oracle
