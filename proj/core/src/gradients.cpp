#include "sgcam/gradients.hpp"

#include <algorithm>
#include <cmath>

#include "sgcam/errors.hpp"

namespace sgcam {
namespace {

std::size_t conv_layer_index(const Model& model, std::string_view layer) {
  const auto idx = model.index_of(layer);
  if (!idx) throw UnknownLayer("unknown layer: " + std::string(layer));
  if (model.layers()[*idx].kind != LayerKind::Conv) {
    throw NonConvLayer("layer '" + std::string(layer) + "' is a " +
                       std::string(to_string(model.layers()[*idx].kind)) + " layer, not conv");
  }
  return *idx;
}

void check_trace(const Model& model, const ActivationTrace& trace) {
  if (trace.size() != model.layers().size() || trace.input.shape() != model.input_shape()) {
    throw ShapeError("activation trace was not produced by this model");
  }
}

// dY/d(logits) for the requested score.
Tensor score_seed(ScoreKind kind, const Tensor& logits, std::size_t cls) {
  Tensor seed(logits.shape(), 0.0);
  switch (kind) {
    case ScoreKind::RawLogit:
      seed[cls] = 1.0;
      break;
    case ScoreKind::ExpLogit:
      seed[cls] = std::exp(logits[cls]);
      break;
    case ScoreKind::Probability: {
      const Tensor p = softmax(logits);
      for (std::size_t j = 0; j < p.size(); ++j) {
        seed[j] = p[cls] * ((j == cls ? 1.0 : 0.0) - p[j]);
      }
      break;
    }
  }
  return seed;
}

const Tensor& layer_input(const ActivationTrace& trace, std::size_t i) {
  return i == 0 ? trace.input : trace.outputs[i - 1];
}

// Gradient with respect to the input of layer `first`, given the gradient
// with respect to the logit layer's output.
Tensor backpropagate(const Model& model, const ActivationTrace& trace, Tensor grad, std::size_t first) {
  for (std::size_t i = model.logit_layer() + 1; i-- > first;) {
    const LayerSpec& layer = model.layers()[i];
    const Tensor& in = layer_input(trace, i);
    switch (layer.kind) {
      case LayerKind::Conv: {
        const auto& p = layer.conv_params();
        const std::size_t channels = in.dim(0), height = in.dim(1), width = in.dim(2);
        const std::size_t count = p.kernels.dim(0), kh = p.kernels.dim(2), kw = p.kernels.dim(3);
        const std::size_t out_h = grad.dim(1), out_w = grad.dim(2);
        const auto pad = static_cast<std::ptrdiff_t>(p.padding);
        Tensor dx(in.shape(), 0.0);
        for (std::size_t k = 0; k < count; ++k) {
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const double go = grad(k, oy, ox);
              if (go == 0.0) continue;
              for (std::size_t c = 0; c < channels; ++c) {
                for (std::size_t a = 0; a < kh; ++a) {
                  const auto y = static_cast<std::ptrdiff_t>(oy * p.stride + a) - pad;
                  if (y < 0 || y >= static_cast<std::ptrdiff_t>(height)) continue;
                  for (std::size_t b = 0; b < kw; ++b) {
                    const auto x = static_cast<std::ptrdiff_t>(ox * p.stride + b) - pad;
                    if (x < 0 || x >= static_cast<std::ptrdiff_t>(width)) continue;
                    dx(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) +=
                        go * p.kernels.data()[((k * channels + c) * kh + a) * kw + b];
                  }
                }
              }
            }
          }
        }
        grad = std::move(dx);
        break;
      }
      case LayerKind::Relu: {
        // Gate taken from the output: relu(x) > 0 iff x > 0, and the
        // derivative at exactly zero is 0.
        const Tensor& out = trace.outputs[i];
        for (std::size_t e = 0; e < grad.size(); ++e) {
          if (!(out[e] > 0.0)) grad[e] = 0.0;
        }
        break;
      }
      case LayerKind::MaxPool: {
        Tensor dx(in.shape(), 0.0);
        const auto& argmax = trace.pool_argmax[i];
        for (std::size_t e = 0; e < grad.size(); ++e) dx[argmax[e]] += grad[e];
        grad = std::move(dx);
        break;
      }
      case LayerKind::Flatten:
        grad = grad.reshaped(in.shape());
        break;
      case LayerKind::Dense: {
        const auto& w = layer.dense_params().weights;
        Tensor dx(in.shape(), 0.0);
        for (std::size_t m = 0; m < w.dim(0); ++m) {
          const double gm = grad[m];
          if (gm == 0.0) continue;
          for (std::size_t n = 0; n < w.dim(1); ++n) dx[n] += w(m, n) * gm;
        }
        grad = std::move(dx);
        break;
      }
      case LayerKind::Softmax:
        throw ShapeError("softmax layer inside the differentiated tail");
    }
  }
  return grad;
}

// Logits from the input of layer `first` onward, with every nonlinearity
// replaced by its frozen linearisation from the trace.
Tensor frozen_tail(const Model& model, const ActivationTrace& trace, std::size_t first, Tensor x) {
  for (std::size_t i = first; i <= model.logit_layer(); ++i) {
    const LayerSpec& layer = model.layers()[i];
    switch (layer.kind) {
      case LayerKind::Conv: {
        const auto& p = layer.conv_params();
        x = conv2d(x, p.kernels, p.bias, p.stride, p.padding);
        break;
      }
      case LayerKind::Relu: {
        const Tensor& gate = trace.outputs[i];
        for (std::size_t e = 0; e < x.size(); ++e) x[e] = gate[e] > 0.0 ? x[e] : 0.0;
        break;
      }
      case LayerKind::MaxPool: {
        const auto& argmax = trace.pool_argmax[i];
        Tensor out(trace.outputs[i].shape());
        for (std::size_t e = 0; e < out.size(); ++e) out[e] = x[argmax[e]];
        x = std::move(out);
        break;
      }
      case LayerKind::Flatten:
        x = x.reshaped({x.size()});
        break;
      case LayerKind::Dense: {
        const auto& p = layer.dense_params();
        x = dense(x, p.weights, p.bias);
        break;
      }
      case LayerKind::Softmax:
        break;
    }
  }
  return x;
}

Tensor central_difference(const Model& model, const ActivationTrace& trace, const ScoreMode& score,
                          std::size_t first, const Tensor& point, double h) {
  if (!(h > 0.0)) throw ParamError("finite-difference step must be positive");
  const std::size_t cls = resolve_class(score, trace);
  Tensor estimate(point.shape(), 0.0);
  Tensor probe = point;
  for (std::size_t e = 0; e < point.size(); ++e) {
    probe[e] = point[e] + h;
    const double up = class_score(score.kind, frozen_tail(model, trace, first, probe), cls);
    probe[e] = point[e] - h;
    const double down = class_score(score.kind, frozen_tail(model, trace, first, probe), cls);
    probe[e] = point[e];
    estimate[e] = (up - down) / (2.0 * h);
  }
  return estimate;
}

}  // namespace

std::string_view to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::RawLogit:
      return "logit";
    case ScoreKind::ExpLogit:
      return "exp";
    case ScoreKind::Probability:
      return "probability";
  }
  return "unknown";
}

std::size_t resolve_class(const ScoreMode& score, const ActivationTrace& trace) {
  const std::size_t classes = trace.logits.size();
  if (score.class_index) {
    if (*score.class_index >= classes) {
      throw ParamError("class index " + std::to_string(*score.class_index) + " out of range [0, " +
                       std::to_string(classes) + ")");
    }
    return *score.class_index;
  }
  const auto values = trace.logits.data();
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

double class_score(ScoreKind kind, const Tensor& logits, std::size_t cls) {
  switch (kind) {
    case ScoreKind::RawLogit:
      return logits[cls];
    case ScoreKind::ExpLogit:
      return std::exp(logits[cls]);
    case ScoreKind::Probability:
      return softmax(logits)[cls];
  }
  return 0.0;
}

Tensor grad_wrt_layer(const Model& model, const ActivationTrace& trace, const ScoreMode& score,
                      std::string_view layer) {
  const std::size_t idx = conv_layer_index(model, layer);
  check_trace(model, trace);
  const std::size_t cls = resolve_class(score, trace);
  return backpropagate(model, trace, score_seed(score.kind, trace.logits, cls), idx + 1);
}

Tensor grad_wrt_input(const Model& model, const ActivationTrace& trace, const ScoreMode& score) {
  check_trace(model, trace);
  const std::size_t cls = resolve_class(score, trace);
  return backpropagate(model, trace, score_seed(score.kind, trace.logits, cls), 0);
}

Tensor grad_wrt_input(const Model& model, const Tensor& input, const ScoreMode& score) {
  return grad_wrt_input(model, forward(model, input), score);
}

GradientTriple higher_order_triple(const Tensor& g, double logit, ScoreKind kind) {
  switch (kind) {
    case ScoreKind::RawLogit:
      return {g, Tensor(g.shape(), 0.0), Tensor(g.shape(), 0.0)};
    case ScoreKind::ExpLogit: {
      const double scale = std::exp(logit);
      GradientTriple t{g, g, g};
      for (std::size_t e = 0; e < g.size(); ++e) {
        const double v = g[e];
        t.d1[e] = scale * v;
        t.d2[e] = scale * v * v;
        t.d3[e] = scale * v * v * v;
      }
      return t;
    }
    case ScoreKind::Probability:
      break;
  }
  throw Unsupported("higher-order derivatives are not available for the probability score");
}

Tensor finite_diff_layer_grad(const Model& model, const ActivationTrace& trace,
                              const ScoreMode& score, std::string_view layer, double h) {
  const std::size_t idx = conv_layer_index(model, layer);
  check_trace(model, trace);
  return central_difference(model, trace, score, idx + 1, trace.outputs[idx], h);
}

Tensor finite_diff_input_grad(const Model& model, const ActivationTrace& trace,
                              const ScoreMode& score, double h) {
  check_trace(model, trace);
  return central_difference(model, trace, score, 0, trace.input, h);
}

}  // namespace sgcam
