#include "sgcam/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "sgcam/errors.hpp"
#include "sgcam/random.hpp"

namespace sgcam {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
  }
  if (data_.size() != element_count(shape_)) {
    throw ShapeError("tensor of shape " + to_string(shape_) + " needs " +
                     std::to_string(element_count(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape_));
  }
  return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::channel(std::size_t k) const {
  if (rank() != 3 || k >= shape_[0]) {
    throw ShapeError("channel " + std::to_string(k) + " not available in " + to_string(shape_));
  }
  const std::size_t plane = shape_[1] * shape_[2];
  const auto first = data_.begin() + static_cast<std::ptrdiff_t>(k * plane);
  return Tensor({shape_[1], shape_[2]}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(plane)));
}

double Tensor::min() const {
  if (data_.empty()) throw ShapeError("min of empty tensor");
  return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  if (data_.empty()) throw ShapeError("max of empty tensor");
  return *std::max_element(data_.begin(), data_.end());
}

double Tensor::sum() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0);
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  if (input.rank() != 3 || kernels.rank() != 4 || bias.rank() != 1) {
    throw ShapeError("conv2d expects input [C,H,W], kernels [K,C,kh,kw], bias [K]; got " +
                     to_string(input.shape()) + ", " + to_string(kernels.shape()) + ", " +
                     to_string(bias.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  const std::size_t count = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != channels) {
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(channels) +
                     ", kernels expect " + std::to_string(kernels.dim(1)));
  }
  if (bias.dim(0) != count) {
    throw ShapeError("conv2d bias length " + std::to_string(bias.dim(0)) + " != kernel count " +
                     std::to_string(count));
  }
  const std::size_t padded_h = height + 2 * padding, padded_w = width + 2 * padding;
  if (kh > padded_h || kw > padded_w) {
    throw ShapeError("conv2d kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than padded input " + std::to_string(padded_h) + "x" +
                     std::to_string(padded_w));
  }
  if ((padded_h - kh) % stride != 0 || (padded_w - kw) % stride != 0) {
    throw ShapeError("conv2d output size is not integral for stride " + std::to_string(stride));
  }
  const std::size_t out_h = (padded_h - kh) / stride + 1;
  const std::size_t out_w = (padded_w - kw) / stride + 1;

  Tensor out({count, out_h, out_w});
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        double acc = bias[k];
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t i = 0; i < kh; ++i) {
            const auto y = static_cast<std::ptrdiff_t>(oy * stride + i) - pad;
            if (y < 0 || y >= static_cast<std::ptrdiff_t>(height)) continue;
            const double* row = &input.data()[(c * height + static_cast<std::size_t>(y)) * width];
            const double* krow = &kernels.data()[((k * channels + c) * kh + i) * kw];
            for (std::size_t j = 0; j < kw; ++j) {
              const auto x = static_cast<std::ptrdiff_t>(ox * stride + j) - pad;
              if (x < 0 || x >= static_cast<std::ptrdiff_t>(width)) continue;
              acc += krow[j] * row[x];
            }
          }
        }
        out(k, oy, ox) = acc;
      }
    }
  }
  return out;
}

Tensor relu(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

PoolResult maxpool2d(const Tensor& t, std::size_t size, std::size_t stride) {
  if (t.rank() != 3) throw ShapeError("maxpool2d expects [C,H,W], got " + to_string(t.shape()));
  if (size == 0 || stride == 0) throw ShapeError("maxpool2d size and stride must be positive");
  const std::size_t channels = t.dim(0), height = t.dim(1), width = t.dim(2);
  if (height < size || width < size) {
    throw ShapeError("maxpool2d window " + std::to_string(size) + " larger than input " +
                     to_string(t.shape()));
  }
  const std::size_t out_h = (height - size) / stride + 1;
  const std::size_t out_w = (width - size) / stride + 1;

  PoolResult result{Tensor({channels, out_h, out_w}), {}};
  result.argmax.resize(result.output.size());
  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox, ++o) {
        std::size_t best = (c * height + oy * stride) * width + ox * stride;
        for (std::size_t i = 0; i < size; ++i) {
          for (std::size_t j = 0; j < size; ++j) {
            const std::size_t idx = (c * height + oy * stride + i) * width + ox * stride + j;
            if (t[idx] > t[best]) best = idx;
          }
        }
        result.output[o] = t[best];
        result.argmax[o] = best;
      }
    }
  }
  return result;
}

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  if (x.rank() != 1 || weights.rank() != 2 || bias.rank() != 1 ||
      weights.dim(1) != x.dim(0) || weights.dim(0) != bias.dim(0)) {
    throw ShapeError("dense expects x [N], weights [M,N], bias [M]; got " + to_string(x.shape()) +
                     ", " + to_string(weights.shape()) + ", " + to_string(bias.shape()));
  }
  const std::size_t rows = weights.dim(0), cols = weights.dim(1);
  Tensor out({rows});
  for (std::size_t m = 0; m < rows; ++m) {
    double acc = bias[m];
    for (std::size_t n = 0; n < cols; ++n) acc += weights(m, n) * x[n];
    out[m] = acc;
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1) throw ShapeError("softmax expects a vector, got " + to_string(logits.shape()));
  const double peak = logits.max();
  Tensor out = logits;
  double total = 0.0;
  for (double& v : out.data()) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : out.data()) v /= total;
  return out;
}

Tensor add_gaussian_noise(const Tensor& t, double sigma, GaussianRng& rng) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ParamError("noise sigma must be a finite non-negative number, got " + std::to_string(sigma));
  }
  if (sigma == 0.0) return t;
  Tensor out = t;
  for (double& v : out.data()) v += sigma * rng.normal();
  return out;
}

Tensor bilinear_resize(const Tensor& map, std::size_t target_h, std::size_t target_w) {
  if (map.rank() != 2) throw ShapeError("bilinear_resize expects [h,w], got " + to_string(map.shape()));
  if (target_h == 0 || target_w == 0) throw ShapeError("bilinear_resize target must be non-empty");
  const std::size_t src_h = map.dim(0), src_w = map.dim(1);

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  const auto taps = [](std::size_t src, std::size_t dst) {
    std::vector<Tap> out(dst);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t d = 0; d < dst; ++d) {
      double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src - 1));
      const auto lo = static_cast<std::size_t>(std::floor(s));
      const std::size_t hi = std::min(lo + 1, src - 1);
      out[d] = {lo, hi, s - static_cast<double>(lo)};
    }
    return out;
  };
  const auto rows = taps(src_h, target_h);
  const auto cols = taps(src_w, target_w);

  // Rounding in the lerp can step an ulp past the source range.
  const double lo_bound = map.min(), hi_bound = map.max();
  Tensor out({target_h, target_w});
  for (std::size_t y = 0; y < target_h; ++y) {
    const Tap& r = rows[y];
    for (std::size_t x = 0; x < target_w; ++x) {
      const Tap& c = cols[x];
      const double top = map(r.lo, c.lo) + c.frac * (map(r.lo, c.hi) - map(r.lo, c.lo));
      const double bottom = map(r.hi, c.lo) + c.frac * (map(r.hi, c.hi) - map(r.hi, c.lo));
      out(y, x) = std::clamp(top + r.frac * (bottom - top), lo_bound, hi_bound);
    }
  }
  return out;
}

}  // namespace sgcam
