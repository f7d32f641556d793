#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sgcam {

class GaussianRng;

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// The element count always equals the product of the shape. Ops in this
/// header never modify their arguments; they return new tensors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor vector(std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double operator[](std::size_t flat) const { return data_[flat]; }
  double& operator[](std::size_t flat) { return data_[flat]; }

  // Unchecked multi-index accessors for rank-2 and rank-3 tensors.
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t ch, std::size_t r, std::size_t c) const {
    return data_[(ch * shape_[1] + r) * shape_[2] + c];
  }
  double& operator()(std::size_t ch, std::size_t r, std::size_t c) {
    return data_[(ch * shape_[1] + r) * shape_[2] + c];
  }

  /// Same data under a new shape; element counts must agree.
  Tensor reshaped(Shape shape) const;

  /// Copy of channel `k` of a rank-3 tensor as a rank-2 [H,W] tensor.
  Tensor channel(std::size_t k) const;

  double min() const;
  double max() const;
  double sum() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// 2-D cross-correlation with zero padding, as every CNN framework calls
/// "convolution". input [C,H,W], kernels [K,C,kh,kw], bias [K].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding);

Tensor relu(const Tensor& t);

struct PoolResult {
  Tensor output;
  // Flat index into the pooled input of each output element's maximum.
  std::vector<std::size_t> argmax;
};

/// Max pooling over [C,H,W]. Ties go to the first element in row-major
/// window order.
PoolResult maxpool2d(const Tensor& t, std::size_t size, std::size_t stride);

/// weights [M,N] times x [N] plus bias [M].
Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias);

Tensor softmax(const Tensor& logits);

/// t + N(0, sigma^2) per element. sigma is absolute.
Tensor add_gaussian_noise(const Tensor& t, double sigma, GaussianRng& rng);

/// Bilinear resampling of an [h,w] map with half-pixel centres:
/// src = (dst + 0.5) * (srcDim / dstDim) - 0.5, clamped to [0, srcDim - 1].
Tensor bilinear_resize(const Tensor& map, std::size_t target_h, std::size_t target_w);

}  // namespace sgcam
