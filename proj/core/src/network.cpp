#include "sgcam/network.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "sgcam/errors.hpp"

namespace sgcam {
namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 6> kKindNames{{
    {LayerKind::Conv, "conv"},
    {LayerKind::Relu, "relu"},
    {LayerKind::MaxPool, "maxpool"},
    {LayerKind::Flatten, "flatten"},
    {LayerKind::Dense, "dense"},
    {LayerKind::Softmax, "softmax"},
}};

[[noreturn]] void fail(const LayerSpec& layer, const std::string& what) {
  throw ShapeError("layer '" + layer.name + "': " + what);
}

Shape infer_one(const LayerSpec& layer, const Shape& in) {
  switch (layer.kind) {
    case LayerKind::Conv: {
      const auto* p = std::get_if<ConvParams>(&layer.params);
      if (!p) fail(layer, "missing conv parameters");
      if (in.size() != 3) fail(layer, "conv expects [C,H,W] input, got " + to_string(in));
      if (p->kernels.rank() != 4) fail(layer, "kernels must be [K,C,kh,kw]");
      if (p->bias.rank() != 1 || p->bias.dim(0) != p->kernels.dim(0)) {
        fail(layer, "bias must have one entry per kernel");
      }
      if (p->kernels.dim(1) != in[0]) {
        fail(layer, "kernels expect " + std::to_string(p->kernels.dim(1)) + " channels, input has " +
                        std::to_string(in[0]));
      }
      if (p->stride == 0) fail(layer, "stride must be positive");
      const std::size_t kh = p->kernels.dim(2), kw = p->kernels.dim(3);
      const std::size_t ph = in[1] + 2 * p->padding, pw = in[2] + 2 * p->padding;
      if (kh > ph || kw > pw) fail(layer, "kernel larger than padded input " + to_string(in));
      if ((ph - kh) % p->stride != 0 || (pw - kw) % p->stride != 0) {
        fail(layer, "output size not integral for stride " + std::to_string(p->stride));
      }
      return {p->kernels.dim(0), (ph - kh) / p->stride + 1, (pw - kw) / p->stride + 1};
    }
    case LayerKind::Relu:
      return in;
    case LayerKind::MaxPool: {
      const auto* p = std::get_if<PoolParams>(&layer.params);
      if (!p) fail(layer, "missing pool parameters");
      if (in.size() != 3) fail(layer, "maxpool expects [C,H,W] input, got " + to_string(in));
      if (p->size == 0 || p->stride == 0) fail(layer, "pool size and stride must be positive");
      if (in[1] < p->size || in[2] < p->size) fail(layer, "pool window larger than " + to_string(in));
      return {in[0], (in[1] - p->size) / p->stride + 1, (in[2] - p->size) / p->stride + 1};
    }
    case LayerKind::Flatten:
      return {element_count(in)};
    case LayerKind::Dense: {
      const auto* p = std::get_if<DenseParams>(&layer.params);
      if (!p) fail(layer, "missing dense parameters");
      if (in.size() != 1) fail(layer, "dense expects a flat input, got " + to_string(in));
      if (p->weights.rank() != 2) fail(layer, "weights must be [M,N]");
      if (p->bias.rank() != 1 || p->bias.dim(0) != p->weights.dim(0)) {
        fail(layer, "bias must have one entry per output");
      }
      if (p->weights.dim(1) != in[0]) {
        fail(layer, "expects " + std::to_string(p->weights.dim(1)) + " inputs, fed " +
                        std::to_string(in[0]));
      }
      return {p->weights.dim(0)};
    }
    case LayerKind::Softmax:
      if (in.size() != 1) fail(layer, "softmax expects a flat input, got " + to_string(in));
      return in;
  }
  fail(layer, "unknown layer kind");
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<LayerKind> parse_layer_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

LayerSpec LayerSpec::conv(std::string name, Tensor kernels, Tensor bias, std::size_t stride,
                          std::size_t padding) {
  return {std::move(name), LayerKind::Conv, ConvParams{std::move(kernels), std::move(bias), stride, padding}};
}
LayerSpec LayerSpec::relu(std::string name) { return {std::move(name), LayerKind::Relu, {}}; }
LayerSpec LayerSpec::maxpool(std::string name, std::size_t size, std::size_t stride) {
  return {std::move(name), LayerKind::MaxPool, PoolParams{size, stride}};
}
LayerSpec LayerSpec::flatten(std::string name) { return {std::move(name), LayerKind::Flatten, {}}; }
LayerSpec LayerSpec::dense(std::string name, Tensor weights, Tensor bias) {
  return {std::move(name), LayerKind::Dense, DenseParams{std::move(weights), std::move(bias)}};
}
LayerSpec LayerSpec::softmax(std::string name) { return {std::move(name), LayerKind::Softmax, {}}; }

ShapeTable validate(const std::vector<LayerSpec>& layers, const Shape& input_shape,
                    std::size_t class_count) {
  if (layers.empty()) throw ShapeError("model has no layers");
  if (input_shape.empty() || element_count(input_shape) == 0) {
    throw ShapeError("model input shape " + to_string(input_shape) + " is empty");
  }
  if (class_count == 0) throw ShapeError("class count must be positive");

  std::set<std::string> seen;
  ShapeTable shapes;
  shapes.reserve(layers.size());
  Shape current = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    if (layer.name.empty()) throw ShapeError("layer " + std::to_string(i) + " has no name");
    if (!seen.insert(layer.name).second) fail(layer, "duplicate layer name");
    if (layer.kind == LayerKind::Softmax && i + 1 != layers.size()) {
      fail(layer, "softmax is only allowed as the final layer");
    }
    current = infer_one(layer, current);
    shapes.push_back(current);
  }
  if (current.size() != 1 || current[0] != class_count) {
    fail(layers.back(), "final output " + to_string(current) + " does not match class count " +
                            std::to_string(class_count));
  }
  return shapes;
}

Model::Model(std::vector<LayerSpec> layers, Shape input_shape, std::size_t class_count)
    : layers_(std::move(layers)),
      input_shape_(std::move(input_shape)),
      class_count_(class_count),
      shapes_(sgcam::validate(layers_, input_shape_, class_count_)) {
  logit_layer_ = layers_.size() - 1;
  if (layers_.back().kind == LayerKind::Softmax) {
    if (layers_.size() < 2) throw ShapeError("model consists of a lone softmax layer");
    logit_layer_ = layers_.size() - 2;
  }
}

std::optional<std::size_t> Model::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == name) return i;
  }
  return std::nullopt;
}

ShapeTable validate(const Model& model) {
  return validate(model.layers(), model.input_shape(), model.class_count());
}

std::vector<std::string> list_conv_layers(const Model& model) {
  std::vector<std::string> names;
  for (const auto& layer : model.layers()) {
    if (layer.kind == LayerKind::Conv) names.push_back(layer.name);
  }
  return names;
}

bool ActivationTrace::contains(std::string_view name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

const Tensor& ActivationTrace::at(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw UnknownLayer("unknown layer: " + std::string(name));
  return outputs[static_cast<std::size_t>(it - names.begin())];
}

ActivationTrace forward(const Model& model, const Tensor& input) {
  if (input.shape() != model.input_shape()) {
    throw ShapeError("input shape " + to_string(input.shape()) + " does not match model input " +
                     to_string(model.input_shape()));
  }
  ActivationTrace trace;
  trace.input = input;
  const auto& layers = model.layers();
  trace.names.reserve(layers.size());
  trace.outputs.reserve(layers.size());
  trace.pool_argmax.resize(layers.size());

  const Tensor* current = &trace.input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    Tensor out;
    switch (layer.kind) {
      case LayerKind::Conv: {
        const auto& p = layer.conv_params();
        out = conv2d(*current, p.kernels, p.bias, p.stride, p.padding);
        break;
      }
      case LayerKind::Relu:
        out = relu(*current);
        break;
      case LayerKind::MaxPool: {
        const auto& p = layer.pool_params();
        auto pooled = maxpool2d(*current, p.size, p.stride);
        out = std::move(pooled.output);
        trace.pool_argmax[i] = std::move(pooled.argmax);
        break;
      }
      case LayerKind::Flatten:
        out = current->reshaped({current->size()});
        break;
      case LayerKind::Dense: {
        const auto& p = layer.dense_params();
        out = dense(*current, p.weights, p.bias);
        break;
      }
      case LayerKind::Softmax:
        out = softmax(*current);
        break;
    }
    trace.names.push_back(layer.name);
    trace.outputs.push_back(std::move(out));
    current = &trace.outputs.back();
  }
  trace.logits = trace.outputs[model.logit_layer()];
  trace.probabilities = softmax(trace.logits);
  return trace;
}

}  // namespace sgcam
