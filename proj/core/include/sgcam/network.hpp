#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sgcam/tensor.hpp"

namespace sgcam {

enum class LayerKind { Conv, Relu, MaxPool, Flatten, Dense, Softmax };

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view name);

struct ConvParams {
  Tensor kernels;  // [K,C,kh,kw]
  Tensor bias;     // [K]
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct PoolParams {
  std::size_t size = 2;
  std::size_t stride = 2;
};

struct DenseParams {
  Tensor weights;  // [M,N]
  Tensor bias;     // [M]
};

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Relu;
  std::variant<std::monostate, ConvParams, PoolParams, DenseParams> params;

  static LayerSpec conv(std::string name, Tensor kernels, Tensor bias, std::size_t stride = 1,
                        std::size_t padding = 0);
  static LayerSpec relu(std::string name);
  static LayerSpec maxpool(std::string name, std::size_t size, std::size_t stride);
  static LayerSpec flatten(std::string name);
  static LayerSpec dense(std::string name, Tensor weights, Tensor bias);
  static LayerSpec softmax(std::string name);

  const ConvParams& conv_params() const { return std::get<ConvParams>(params); }
  const PoolParams& pool_params() const { return std::get<PoolParams>(params); }
  const DenseParams& dense_params() const { return std::get<DenseParams>(params); }
};

/// Output shape of every layer, in layer order.
using ShapeTable = std::vector<Shape>;

/// Shape inference for a straight pipeline. Throws ShapeError naming the
/// first layer whose input does not fit. Softmax may only appear last, and
/// the last layer must emit `class_count` values.
ShapeTable validate(const std::vector<LayerSpec>& layers, const Shape& input_shape,
                    std::size_t class_count);

/// Immutable layer pipeline. Construction validates shapes.
class Model {
 public:
  Model(std::vector<LayerSpec> layers, Shape input_shape, std::size_t class_count);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t class_count() const noexcept { return class_count_; }
  const ShapeTable& shapes() const noexcept { return shapes_; }

  std::optional<std::size_t> index_of(std::string_view name) const;
  /// Layer whose output holds the logits: the last non-softmax layer.
  std::size_t logit_layer() const noexcept { return logit_layer_; }

 private:
  std::vector<LayerSpec> layers_;
  Shape input_shape_;
  std::size_t class_count_;
  ShapeTable shapes_;
  std::size_t logit_layer_ = 0;
};

ShapeTable validate(const Model& model);

/// Conv layer names in forward order.
std::vector<std::string> list_conv_layers(const Model& model);

/// Every layer's output from one forward pass, plus the pooling argmax
/// records backprop and the frozen-gate oracle need.
struct ActivationTrace {
  Tensor input;
  std::vector<std::string> names;
  std::vector<Tensor> outputs;
  std::vector<std::vector<std::size_t>> pool_argmax;  // empty for non-pool layers
  Tensor logits;
  Tensor probabilities;

  std::size_t size() const noexcept { return outputs.size(); }
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
};

ActivationTrace forward(const Model& model, const Tensor& input);

}  // namespace sgcam
