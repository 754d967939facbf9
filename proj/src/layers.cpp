#include "svae/layers.hpp"

#include <cmath>
#include <sstream>

#include "svae/errors.hpp"
#include "svae/ops.hpp"

namespace svae {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv2d_transpose: return "conv2d_transpose";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& name) {
  for (auto k : {LayerKind::conv2d, LayerKind::conv2d_transpose, LayerKind::dense,
                 LayerKind::relu, LayerKind::sigmoid}) {
    if (to_string(k) == name) return k;
  }
  throw ContractError("unknown layer kind '" + name + "'");
}

std::string format_layer_specs(const std::vector<LayerSpec>& specs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    os << (i ? "," : "") << to_string(s.kind) << ':' << s.out_channels << ':' << s.kernel << ':'
       << s.stride << ':' << s.padding;
    if (s.output_padding) os << ':' << s.output_padding;
  }
  return os.str();
}

std::vector<LayerSpec> parse_layer_specs(const std::string& text) {
  std::vector<LayerSpec> specs;
  std::istringstream items(text);
  std::string item;
  while (std::getline(items, item, ',')) {
    if (item.empty()) continue;
    std::istringstream fields(item);
    std::string field;
    std::vector<std::string> parts;
    while (std::getline(fields, field, ':')) parts.push_back(field);
    if (parts.size() < 5 || parts.size() > 6) {
      throw ContractError("bad layer spec '" + item + "', expected kind:out:kernel:stride:padding");
    }
    LayerSpec s;
    s.kind = parse_layer_kind(parts[0]);
    try {
      s.out_channels = std::stoul(parts[1]);
      s.kernel = std::stoul(parts[2]);
      s.stride = std::stoul(parts[3]);
      s.padding = std::stoul(parts[4]);
      if (parts.size() == 6) s.output_padding = std::stoul(parts[5]);
    } catch (const std::exception&) {
      throw ContractError("bad layer spec '" + item + "': non-numeric field");
    }
    specs.push_back(s);
  }
  return specs;
}

Tensor Layer::forward(const Tensor& x) const {
  switch (kind) {
    case LayerKind::conv2d: return ops::conv2d(x, weights, bias, stride, padding);
    case LayerKind::conv2d_transpose:
      return ops::conv2d_transpose(x, weights, bias, stride, padding, output_padding);
    case LayerKind::dense: return ops::dense(x, weights, bias);
    case LayerKind::relu: return ops::relu(x);
    case LayerKind::sigmoid: return ops::sigmoid(x);
  }
  throw ContractError("unreachable layer kind");
}

Layer make_activation(LayerKind kind) {
  if (kind != LayerKind::relu && kind != LayerKind::sigmoid) {
    throw ContractError(to_string(kind) + " is not an activation");
  }
  Layer l;
  l.kind = kind;
  return l;
}

Layer make_layer(const LayerSpec& spec, std::size_t in_channels, Rng& rng) {
  if (spec.kind == LayerKind::relu || spec.kind == LayerKind::sigmoid) {
    return make_activation(spec.kind);
  }
  if (in_channels == 0 || spec.out_channels == 0) {
    throw ContractError("layer with zero channels");
  }
  Layer l;
  l.kind = spec.kind;
  l.stride = spec.stride;
  l.padding = spec.padding;
  l.output_padding = spec.output_padding;
  const std::size_t k = spec.kernel;
  Shape wshape;
  std::size_t fan_in = 0;
  switch (spec.kind) {
    case LayerKind::conv2d:
      wshape = {spec.out_channels, in_channels, k, k};
      fan_in = in_channels * k * k;
      break;
    case LayerKind::conv2d_transpose:
      wshape = {in_channels, spec.out_channels, k, k};
      fan_in = in_channels * k * k;
      break;
    default:
      wshape = {spec.out_channels, in_channels};
      fan_in = in_channels;
      break;
  }
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> w(shape_numel(wshape));
  for (double& v : w) v = rng.uniform(-bound, bound);
  std::vector<double> b(spec.out_channels);
  for (double& v : b) v = rng.uniform(-bound, bound);
  l.weights = Tensor(std::move(wshape), std::move(w));
  l.bias = Tensor(Shape{spec.out_channels}, std::move(b));
  l.weights.set_requires_grad();
  l.bias.set_requires_grad();
  return l;
}

}  // namespace svae
