#include "svae/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "svae/errors.hpp"

namespace svae::ops {

namespace {

using Node = detail::TensorNode;
using NodePtr = std::shared_ptr<Node>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

bool tracks(const Tensor& t) { return grad_enabled() && t.requires_grad(); }

// Builds the output tensor; attaches `backward` only if some input is tracked.
template <typename Backward>
Tensor finish(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
              Backward&& backward) {
  Tensor out(std::move(shape), std::move(values));
  bool any = false;
  for (const auto& in : inputs) any = any || tracks(in);
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& in : inputs) node.parents.push_back(in.node());
  node.backward = std::forward<Backward>(backward);
  return out;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const char* op, const char* name, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + name + " must have rank " +
                         std::to_string(rank) + ", got shape " + shape_str(t.shape()));
  }
}

void axis_mismatch(const char* op, const char* what, std::size_t axis, std::size_t got,
                   std::size_t expected) {
  throw DimensionError(std::string(op) + ": " + what + " axis " + std::to_string(axis) + " is " +
                       std::to_string(got) + " but " + std::to_string(expected) +
                       " was expected");
}

// Unary elementwise op with derivative expressed through input and output.
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  NodePtr an = a.node();
  return finish(a.shape(), std::move(out), {a}, [an, df](Node& self) {
    if (!an->requires_grad) return;
    auto g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(an->data[i], self.data[i]);
  });
}

// Convolution geometry: an "image" plane of size image_h x image_w scanned by
// a k x k window with stride/padding gives a grid_h x grid_w output plane.
struct Geometry {
  std::size_t channels, image_h, image_w, kernel, stride, padding, grid_h, grid_w;
  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return grid_h * grid_w; }
};

// col[(c*k + ki)*k + kj, oh*grid_w + ow] = image[c, oh*s - p + ki, ow*s - p + kj]
void im2col(const double* image, const Geometry& g, double* col) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        double* row = col + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        for (std::size_t oh = 0; oh < g.grid_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          double* dst = row + oh * g.grid_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.image_h)) {
            std::fill(dst, dst + g.grid_w, 0.0);
            continue;
          }
          const double* src = image + (c * g.image_h + static_cast<std::size_t>(ih)) * g.image_w;
          for (std::size_t ow = 0; ow < g.grid_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.image_w))
                          ? 0.0
                          : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

// Exact adjoint of im2col: scatter-add columns back onto the image.
void col2im(const double* col, const Geometry& g, double* image) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const double* row = col + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        for (std::size_t oh = 0; oh < g.grid_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.image_h)) continue;
          double* dst = image + (c * g.image_h + static_cast<std::size_t>(ih)) * g.image_w;
          const double* src = row + oh * g.grid_w;
          for (std::size_t ow = 0; ow < g.grid_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.image_w)) {
              dst[static_cast<std::size_t>(iw)] += src[ow];
            }
          }
        }
      }
    }
  }
}

void check_kernel(const char* op, const Tensor& weight) {
  require_rank(op, "weight", weight, 4);
  if (weight.dim(2) != weight.dim(3)) {
    throw DimensionError(std::string(op) + ": kernel must be square, got " +
                         shape_str(weight.shape()));
  }
}

void check_bias(const char* op, const Tensor& bias, std::size_t channels) {
  if (bias.numel() != 0 && (bias.rank() != 1 || bias.dim(0) != channels)) {
    throw DimensionError(std::string(op) + ": bias shape " + shape_str(bias.shape()) +
                         " does not match " + std::to_string(channels) + " output channels");
  }
}

void add_bias_planes(double* out, const Tensor& bias, std::size_t channels, std::size_t plane) {
  if (bias.numel() == 0) return;
  for (std::size_t c = 0; c < channels; ++c) {
    std::fill(out + c * plane, out + (c + 1) * plane, 0.0);
    const double b = bias[c];
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] += b;
  }
}

void accumulate_bias_grad(const NodePtr& bn, const double* gout, std::size_t batch,
                          std::size_t channels, std::size_t plane) {
  if (!bn || !bn->requires_grad || bn->data.empty()) return;
  auto gb = bn->grad_buffer();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double* p = gout + (b * channels + c) * plane;
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      gb[c] += s;
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  NodePtr an = a.node(), bn = b.node();
  return finish(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    for (const auto& n : {an, bn}) {
      if (!n->requires_grad) continue;
      auto g = n->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  NodePtr an = a.node(), bn = b.node();
  return finish(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) {
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  NodePtr an = a.node(), bn = b.node();
  return finish(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) {
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  NodePtr an = a.node();
  return finish(Shape{1}, {s}, {a}, [an](Node& self) {
    if (!an->requires_grad) return;
    const double g0 = self.grad[0];
    for (double& g : an->grad_buffer()) g += g0;
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  NodePtr an = a.node();
  return finish(std::move(shape), a.values(), {a}, [an](Node& self) {
    if (!an->requires_grad) return;
    auto g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t width) {
  require_rank("slice_cols", "input", a, 2);
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (start + width > cols) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + width) + ") exceed axis 1 of size " +
                         std::to_string(cols));
  }
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(r * cols + start), width,
                out.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  NodePtr an = a.node();
  return finish(Shape{rows, width}, std::move(out), {a}, [an, rows, cols, start, width](Node& self) {
    if (!an->requires_grad) return;
    auto g = an->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < width; ++c) g[r * cols + start + c] += self.grad[r * width + c];
    }
  });
}

namespace {

template <bool Product>
Tensor outer_impl(const char* op, const Tensor& a, const Tensor& b) {
  require_same_shape(op, a, b);
  if (a.rank() == 0) throw DimensionError(std::string(op) + ": rank-0 operand");
  const std::size_t d = a.shape().back();
  const std::size_t batch = d == 0 ? 0 : a.numel() / d;
  Shape shape = a.shape();
  shape.push_back(d);
  std::vector<double> out(batch * d * d);
  auto x = a.data(), y = b.data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        out[(n * d + i) * d + j] =
            Product ? x[n * d + i] * y[n * d + j] : x[n * d + i] + y[n * d + j];
      }
    }
  }
  NodePtr an = a.node(), bn = b.node();
  return finish(std::move(shape), std::move(out), {a, b}, [an, bn, batch, d](Node& self) {
    const auto& go = self.grad;
    if (an->requires_grad) {
      auto g = an->grad_buffer();
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j)
            g[n * d + i] += go[(n * d + i) * d + j] * (Product ? bn->data[n * d + j] : 1.0);
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer();
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j)
            g[n * d + j] += go[(n * d + i) * d + j] * (Product ? an->data[n * d + i] : 1.0);
    }
  });
}

}  // namespace

Tensor outer(const Tensor& a, const Tensor& b) { return outer_impl<true>("outer", a, b); }
Tensor outer_sum(const Tensor& a, const Tensor& b) { return outer_impl<false>("outer_sum", a, b); }

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("dense", "input", x, 2);
  require_rank("dense", "weight", weight, 2);
  const std::size_t batch = x.dim(0), in = x.dim(1), out_features = weight.dim(0);
  if (weight.dim(1) != in) axis_mismatch("dense", "input feature", 1, in, weight.dim(1));
  check_bias("dense", bias, out_features);

  std::vector<double> out(batch * out_features);
  {
    ConstMapMat X(x.data().data(), Eigen::Index(batch), Eigen::Index(in));
    ConstMapMat W(weight.data().data(), Eigen::Index(out_features), Eigen::Index(in));
    MapMat Y(out.data(), Eigen::Index(batch), Eigen::Index(out_features));
    Y.noalias() = X * W.transpose();
    if (bias.numel() != 0) {
      Eigen::Map<const Eigen::RowVectorXd> B(bias.data().data(), Eigen::Index(out_features));
      Y.rowwise() += B;
    }
  }
  NodePtr xn = x.node(), wn = weight.node(), bn = bias.node();
  return finish(Shape{batch, out_features}, std::move(out), {x, weight, bias},
                [xn, wn, bn, batch, in, out_features](Node& self) {
                  ConstMapMat G(self.grad.data(), Eigen::Index(batch), Eigen::Index(out_features));
                  if (xn->requires_grad) {
                    MapMat GX(xn->grad_buffer().data(), Eigen::Index(batch), Eigen::Index(in));
                    ConstMapMat W(wn->data.data(), Eigen::Index(out_features), Eigen::Index(in));
                    GX.noalias() += G * W;
                  }
                  if (wn->requires_grad) {
                    MapMat GW(wn->grad_buffer().data(), Eigen::Index(out_features),
                              Eigen::Index(in));
                    ConstMapMat X(xn->data.data(), Eigen::Index(batch), Eigen::Index(in));
                    GW.noalias() += G.transpose() * X;
                  }
                  accumulate_bias_grad(bn, self.grad.data(), batch, out_features, 1);
                });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  static constexpr const char* op = "conv2d";
  require_rank(op, "input", x, 4);
  check_kernel(op, weight);
  if (stride == 0) throw ContractError("conv2d: stride must be >= 1");
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin) axis_mismatch(op, "input channel", 1, cin, weight.dim(1));
  if (h + 2 * padding < k) axis_mismatch(op, "padded height", 2, h + 2 * padding, k);
  if (w + 2 * padding < k) axis_mismatch(op, "padded width", 3, w + 2 * padding, k);
  check_bias(op, bias, cout);

  const Geometry g{cin, h, w, k, stride, padding, (h + 2 * padding - k) / stride + 1,
                   (w + 2 * padding - k) / stride + 1};
  const std::size_t plane = g.col_cols(), crows = g.col_rows();
  std::vector<double> out(batch * cout * plane);
  auto cols = std::make_shared<std::vector<double>>(batch * crows * plane);

  ConstMapMat W(weight.data().data(), Eigen::Index(cout), Eigen::Index(crows));
  for (std::size_t b = 0; b < batch; ++b) {
    double* col = cols->data() + b * crows * plane;
    im2col(x.data().data() + b * cin * h * w, g, col);
    double* ob = out.data() + b * cout * plane;
    add_bias_planes(ob, bias, cout, plane);
    MapMat O(ob, Eigen::Index(cout), Eigen::Index(plane));
    if (bias.numel() == 0) {
      O.noalias() = W * ConstMapMat(col, Eigen::Index(crows), Eigen::Index(plane));
    } else {
      O.noalias() += W * ConstMapMat(col, Eigen::Index(crows), Eigen::Index(plane));
    }
  }

  NodePtr xn = x.node(), wn = weight.node(), bn = bias.node();
  return finish(
      Shape{batch, cout, g.grid_h, g.grid_w}, std::move(out), {x, weight, bias},
      [xn, wn, bn, g, batch, cout, cols](Node& self) {
        const std::size_t plane = g.col_cols(), crows = g.col_rows();
        const std::size_t in_size = g.channels * g.image_h * g.image_w;
        ConstMapMat W(wn->data.data(), Eigen::Index(cout), Eigen::Index(crows));
        std::vector<double> dcol(xn->requires_grad ? crows * plane : 0);
        for (std::size_t b = 0; b < batch; ++b) {
          ConstMapMat G(self.grad.data() + b * cout * plane, Eigen::Index(cout),
                        Eigen::Index(plane));
          ConstMapMat C(cols->data() + b * crows * plane, Eigen::Index(crows),
                        Eigen::Index(plane));
          if (wn->requires_grad) {
            MapMat GW(wn->grad_buffer().data(), Eigen::Index(cout), Eigen::Index(crows));
            GW.noalias() += G * C.transpose();
          }
          if (xn->requires_grad) {
            MapMat DC(dcol.data(), Eigen::Index(crows), Eigen::Index(plane));
            DC.noalias() = W.transpose() * G;
            col2im(dcol.data(), g, xn->grad_buffer().data() + b * in_size);
          }
        }
        accumulate_bias_grad(bn, self.grad.data(), batch, cout, plane);
      });
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        std::size_t stride, std::size_t padding, std::size_t output_padding) {
  static constexpr const char* op = "conv2d_transpose";
  require_rank(op, "input", x, 4);
  check_kernel(op, weight);
  if (stride == 0) throw ContractError("conv2d_transpose: stride must be >= 1");
  if (output_padding >= stride && output_padding > 0) {
    throw ContractError("conv2d_transpose: output_padding must be smaller than stride");
  }
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(1), k = weight.dim(2);
  if (weight.dim(0) != cin) axis_mismatch(op, "input channel", 1, cin, weight.dim(0));
  check_bias(op, bias, cout);
  if (h == 0 || w == 0) throw DimensionError("conv2d_transpose: empty spatial axis");
  const std::size_t full_h = (h - 1) * stride + k + output_padding;
  const std::size_t full_w = (w - 1) * stride + k + output_padding;
  if (full_h <= 2 * padding || full_w <= 2 * padding) {
    throw DimensionError("conv2d_transpose: padding " + std::to_string(padding) +
                         " leaves an empty output");
  }
  // The output plane is the conv "image"; the input plane is the conv grid.
  const Geometry g{cout, full_h - 2 * padding, full_w - 2 * padding, k, stride, padding, h, w};
  const std::size_t plane_in = h * w, plane_out = g.image_h * g.image_w, crows = g.col_rows();

  std::vector<double> out(batch * cout * plane_out, 0.0);
  ConstMapMat W(weight.data().data(), Eigen::Index(cin), Eigen::Index(crows));
  std::vector<double> col(crows * plane_in);
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMapMat X(x.data().data() + b * cin * plane_in, Eigen::Index(cin), Eigen::Index(plane_in));
    MapMat C(col.data(), Eigen::Index(crows), Eigen::Index(plane_in));
    C.noalias() = W.transpose() * X;
    double* ob = out.data() + b * cout * plane_out;
    col2im(col.data(), g, ob);
    if (bias.numel() != 0) {
      for (std::size_t c = 0; c < cout; ++c)
        for (std::size_t i = 0; i < plane_out; ++i) ob[c * plane_out + i] += bias[c];
    }
  }

  NodePtr xn = x.node(), wn = weight.node(), bn = bias.node();
  return finish(
      Shape{batch, cout, g.image_h, g.image_w}, std::move(out), {x, weight, bias},
      [xn, wn, bn, g, batch, cin](Node& self) {
        const std::size_t plane_in = g.grid_h * g.grid_w, plane_out = g.image_h * g.image_w;
        const std::size_t crows = g.col_rows(), cout = g.channels;
        std::vector<double> dcol(crows * plane_in);
        ConstMapMat W(wn->data.data(), Eigen::Index(cin), Eigen::Index(crows));
        for (std::size_t b = 0; b < batch; ++b) {
          im2col(self.grad.data() + b * cout * plane_out, g, dcol.data());
          ConstMapMat DC(dcol.data(), Eigen::Index(crows), Eigen::Index(plane_in));
          if (xn->requires_grad) {
            MapMat GX(xn->grad_buffer().data() + b * cin * plane_in, Eigen::Index(cin),
                      Eigen::Index(plane_in));
            GX.noalias() += W * DC;
          }
          if (wn->requires_grad) {
            ConstMapMat X(xn->data.data() + b * cin * plane_in, Eigen::Index(cin),
                          Eigen::Index(plane_in));
            MapMat GW(wn->grad_buffer().data(), Eigen::Index(cin), Eigen::Index(crows));
            GW.noalias() += X * DC.transpose();
          }
        }
        accumulate_bias_grad(bn, self.grad.data(), batch, cout, plane_out);
      });
}

Tensor crop_or_pad(const Tensor& x, std::size_t height, std::size_t width) {
  require_rank("crop_or_pad", "input", x, 4);
  const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h == height && w == width) return x;
  // Signed offset of the output window inside the input plane.
  const auto oy = (static_cast<std::ptrdiff_t>(h) - static_cast<std::ptrdiff_t>(height)) / 2;
  const auto ox = (static_cast<std::ptrdiff_t>(w) - static_cast<std::ptrdiff_t>(width)) / 2;
  std::vector<double> out(batch * ch * height * width, 0.0);
  auto map = [=](std::size_t plane, std::size_t i, std::size_t j) -> std::ptrdiff_t {
    const auto si = static_cast<std::ptrdiff_t>(i) + oy;
    const auto sj = static_cast<std::ptrdiff_t>(j) + ox;
    if (si < 0 || sj < 0 || si >= static_cast<std::ptrdiff_t>(h) ||
        sj >= static_cast<std::ptrdiff_t>(w))
      return -1;
    return static_cast<std::ptrdiff_t>(plane * h * w) + si * static_cast<std::ptrdiff_t>(w) + sj;
  };
  for (std::size_t p = 0; p < batch * ch; ++p)
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j)
        if (auto s = map(p, i, j); s >= 0)
          out[(p * height + i) * width + j] = x[static_cast<std::size_t>(s)];
  NodePtr xn = x.node();
  return finish(Shape{batch, ch, height, width}, std::move(out), {x},
                [xn, map, batch, ch, height, width](Node& self) {
                  if (!xn->requires_grad) return;
                  auto g = xn->grad_buffer();
                  for (std::size_t p = 0; p < batch * ch; ++p)
                    for (std::size_t i = 0; i < height; ++i)
                      for (std::size_t j = 0; j < width; ++j)
                        if (auto s = map(p, i, j); s >= 0)
                          g[static_cast<std::size_t>(s)] += self.grad[(p * height + i) * width + j];
                });
}

}  // namespace svae::ops
