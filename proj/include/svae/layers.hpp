#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "svae/rng.hpp"
#include "svae/tensor.hpp"

namespace svae {

enum class LayerKind { conv2d, conv2d_transpose, dense, relu, sigmoid };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);

// Geometry of one trainable stage; `in_channels` is inferred when the
// network is assembled.
struct LayerSpec {
  LayerKind kind = LayerKind::conv2d;
  std::size_t out_channels = 0;  // output features for dense
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t output_padding = 0;

  bool operator==(const LayerSpec&) const = default;
};

// "conv2d:32:3:2:1" (kind:out:kernel:stride:padding[:output_padding]),
// comma-separated for lists.
std::string format_layer_specs(const std::vector<LayerSpec>& specs);
std::vector<LayerSpec> parse_layer_specs(const std::string& text);

struct Layer {
  LayerKind kind = LayerKind::relu;
  Tensor weights;  // conv2d [out,in,k,k]; conv2d_transpose [in,out,k,k]; dense [out,in]
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t output_padding = 0;

  Tensor forward(const Tensor& x) const;
  std::size_t parameter_count() const { return weights.numel() + bias.numel(); }
};

// Fan-in scaled uniform init: U(-b, b) with b = sqrt(1 / fan_in), weights then
// bias, drawn in that order from `rng`.
Layer make_layer(const LayerSpec& spec, std::size_t in_channels, Rng& rng);
Layer make_activation(LayerKind kind);

}  // namespace svae
