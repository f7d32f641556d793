#include "sgcam/saliency.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <thread>

#include "sgcam/errors.hpp"
#include "sgcam/random.hpp"

namespace sgcam {
namespace {

constexpr double kDenominatorFloor = 1e-12;

constexpr std::array<std::pair<Method, std::string_view>, 5> kMethodNames{{
    {Method::Sensitivity, "sensitivity"},
    {Method::SmoothGrad, "smoothgrad"},
    {Method::GradCam, "gradcam"},
    {Method::GradCamPP, "gradcampp"},
    {Method::SmoothGradCamPP, "smooth-gradcampp"},
}};

// Incremental mean. Feeding the same value repeatedly returns it exactly.
class RunningMean {
 public:
  void add(const Tensor& x) {
    if (count_ == 0) mean_ = Tensor(x.shape(), 0.0);
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t e = 0; e < x.size(); ++e) mean_[e] += (x[e] - mean_[e]) / n;
  }
  const Tensor& value() const { return mean_; }

 private:
  Tensor mean_;
  std::size_t count_ = 0;
};

// Evaluates fn(s) for s in [0, n) in chunks of `threads` and hands the
// results to reduce(s, result) in ascending s.
template <class Fn, class Reduce>
void for_each_sample(std::size_t n, std::size_t threads, Fn fn, Reduce reduce) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t s = 0; s < n; ++s) reduce(s, fn(s));
    return;
  }
  using Result = decltype(fn(std::size_t{0}));
  for (std::size_t base = 0; base < n; base += threads) {
    const std::size_t chunk = std::min(threads, n - base);
    std::vector<std::optional<Result>> results(chunk);
    std::vector<std::exception_ptr> errors(chunk);
    {
      std::vector<std::jthread> workers;
      workers.reserve(chunk);
      for (std::size_t t = 0; t < chunk; ++t) {
        workers.emplace_back([&, t] {
          try {
            results[t].emplace(fn(base + t));
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
    }
    for (std::size_t t = 0; t < chunk; ++t) {
      if (errors[t]) std::rethrow_exception(errors[t]);
      reduce(base + t, std::move(*results[t]));
    }
  }
}

double absolute_sigma(const Tensor& input, double sigma_rel) {
  return sigma_rel * (input.max() - input.min());
}

Tensor masked(const Tensor& stack, const Tensor& mask) {
  Tensor out = stack;
  const std::size_t plane = mask.size();
  for (std::size_t e = 0; e < out.size(); ++e) {
    if (mask[e % plane] == 0.0) out[e] = 0.0;
  }
  return out;
}

void validate_selection(const NeuronSelection& sel, std::size_t height, std::size_t width) {
  const auto where = [&](std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "," + std::to_string(c) + ")";
  };
  if (sel.region) {
    if (!sel.box) throw ParamError("region selection requires a box");
    const Box& b = *sel.box;
    if (b.top > b.bottom || b.left > b.right) {
      throw ParamError("selection box corners are inverted");
    }
    if (b.bottom >= height || b.right >= width) {
      throw ParamError("selection box corner " + where(b.bottom, b.right) + " outside " +
                       std::to_string(height) + "x" + std::to_string(width) + " feature map");
    }
  } else {
    if (sel.box) throw ParamError("a selection box requires region mode");
    for (const Coord& c : sel.coords) {
      if (c.row >= height || c.col >= width) {
        throw ParamError("neuron " + where(c.row, c.col) + " outside " + std::to_string(height) +
                         "x" + std::to_string(width) + " feature map");
      }
    }
  }
}

SaliencyMeta make_meta(const SaliencyRequest& request, const ActivationTrace& trace, std::size_t cls) {
  SaliencyMeta meta;
  meta.method = request.method;
  meta.score = request.score.kind;
  meta.class_index = cls;
  meta.class_score = class_score(request.score.kind, trace.logits, cls);
  meta.probability = trace.probabilities[cls];
  meta.layer = request.layer;
  meta.samples = request.samples;
  meta.sigma_rel = request.sigma_rel;
  meta.filters = request.filters;
  meta.neurons = request.neurons;
  meta.activation_source = request.activation_source;
  meta.seed = request.seed;
  if (request.method == Method::Sensitivity || request.method == Method::GradCam ||
      request.method == Method::GradCamPP) {
    meta.samples = 1;
    meta.sigma_rel = 0.0;
  }
  if (!is_cam_method(request.method)) {
    meta.layer.clear();
  }
  return meta;
}

}  // namespace

std::string_view to_string(Method method) {
  for (const auto& [m, name] : kMethodNames) {
    if (m == method) return name;
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  for (const auto& [m, n] : kMethodNames) {
    if (n == name) return m;
  }
  return std::nullopt;
}

bool is_cam_method(Method method) {
  return method == Method::GradCam || method == Method::GradCamPP || method == Method::SmoothGradCamPP;
}

std::string_view to_string(ActivationSource source) {
  return source == ActivationSource::Original ? "original" : "averaged";
}

std::optional<ActivationSource> parse_activation_source(std::string_view name) {
  if (name == "original") return ActivationSource::Original;
  if (name == "averaged") return ActivationSource::Averaged;
  return std::nullopt;
}

NeuronSelection NeuronSelection::points(std::vector<Coord> coords) {
  return {std::move(coords), std::nullopt, false};
}

NeuronSelection NeuronSelection::within(Box box) {
  return {{}, box, true};
}

void validate_request(const Model& model, const SaliencyRequest& request) {
  if (request.samples == 0) throw ParamError("sample count must be at least 1");
  if (!(request.sigma_rel >= 0.0 && request.sigma_rel < 1.0)) {
    throw ParamError("relative sigma must lie in [0, 1), got " + std::to_string(request.sigma_rel));
  }
  if (request.score.class_index && *request.score.class_index >= model.class_count()) {
    throw ParamError("class index " + std::to_string(*request.score.class_index) +
                     " out of range [0, " + std::to_string(model.class_count()) + ")");
  }
  if (!is_cam_method(request.method)) {
    if (request.filters || request.neurons) {
      throw ParamError("filter and neuron selection only apply to CAM methods");
    }
    return;
  }
  if (request.score.kind == ScoreKind::Probability && request.method != Method::GradCam) {
    throw Unsupported("higher-order derivatives are not available for the probability score");
  }
  const auto idx = model.index_of(request.layer);
  if (!idx) throw UnknownLayer("unknown layer: " + request.layer);
  if (model.layers()[*idx].kind != LayerKind::Conv) {
    throw NonConvLayer("layer '" + request.layer + "' is not a conv layer");
  }
  const Shape& stack = model.shapes()[*idx];
  if (request.filters) {
    for (std::size_t k : *request.filters) {
      if (k >= stack[0]) {
        throw ParamError("filter index " + std::to_string(k) + " out of range [0, " +
                         std::to_string(stack[0]) + ")");
      }
    }
  }
  if (request.neurons) validate_selection(*request.neurons, stack[1], stack[2]);
}

SmoothedTriple smooth_triple(const Model& model, const Tensor& input, const SaliencyRequest& request) {
  if (request.samples == 0) throw ParamError("sample count must be at least 1");
  const ActivationTrace clean = forward(model, input);
  const std::size_t cls = resolve_class(request.score, clean);
  const ScoreMode logit_score{ScoreKind::RawLogit, cls};
  const double sigma = absolute_sigma(input, request.sigma_rel);
  const bool average_activations = request.activation_source == ActivationSource::Averaged;

  struct Sample {
    GradientTriple triple;
    Tensor activations;
  };
  RunningMean d1, d2, d3, acts;
  for_each_sample(
      request.samples, request.threads,
      [&](std::size_t s) {
        GaussianRng rng(derive_seed(request.seed, s));
        const ActivationTrace trace = forward(model, add_gaussian_noise(input, sigma, rng));
        const Tensor g = grad_wrt_layer(model, trace, logit_score, request.layer);
        Sample out{higher_order_triple(g, trace.logits[cls], request.score.kind), {}};
        if (average_activations) out.activations = trace.at(request.layer);
        return out;
      },
      [&](std::size_t, Sample sample) {
        d1.add(sample.triple.d1);
        d2.add(sample.triple.d2);
        d3.add(sample.triple.d3);
        if (average_activations) acts.add(sample.activations);
      });

  SmoothedTriple result;
  result.triple = {d1.value(), d2.value(), d3.value()};
  result.activations = average_activations ? acts.value() : clean.at(request.layer);
  result.class_index = cls;
  return result;
}

AlphaMap compute_alpha(const GradientTriple& avg, const Tensor& activations) {
  const Shape& shape = activations.shape();
  if (shape.size() != 3 || avg.d1.shape() != shape || avg.d2.shape() != shape ||
      avg.d3.shape() != shape) {
    throw ShapeError("alpha needs d1, d2, d3 and activations of one [K,h,w] shape, got " +
                     to_string(avg.d1.shape()) + ", " + to_string(avg.d2.shape()) + ", " +
                     to_string(avg.d3.shape()) + ", " + to_string(shape));
  }
  const std::size_t plane = shape[1] * shape[2];
  AlphaMap alpha{Tensor(shape, 0.0)};
  for (std::size_t k = 0; k < shape[0]; ++k) {
    const std::size_t base = k * plane;
    double map_total = 0.0;
    for (std::size_t e = 0; e < plane; ++e) map_total += activations[base + e];
    for (std::size_t e = base; e < base + plane; ++e) {
      const double den = 2.0 * avg.d2[e] + map_total * avg.d3[e];
      alpha.values[e] = std::abs(den) < kDenominatorFloor ? 0.0 : avg.d1[e] / den;
    }
  }
  return alpha;
}

WeightVector gradcampp_weights(const AlphaMap& alpha, const Tensor& d1) {
  if (alpha.values.rank() != 3 || alpha.values.shape() != d1.shape()) {
    throw ShapeError("alpha " + to_string(alpha.values.shape()) + " and d1 " +
                     to_string(d1.shape()) + " must share one [K,h,w] shape");
  }
  const std::size_t maps = d1.dim(0), plane = d1.dim(1) * d1.dim(2);
  WeightVector weights{std::vector<double>(maps, 0.0)};
  for (std::size_t k = 0; k < maps; ++k) {
    double acc = 0.0;
    for (std::size_t e = k * plane; e < (k + 1) * plane; ++e) {
      acc += alpha.values[e] * std::max(d1[e], 0.0);
    }
    weights.w[k] = acc;
  }
  return weights;
}

WeightVector gradcam_weights(const Tensor& g) {
  if (g.rank() != 3) throw ShapeError("gradcam weights need a [K,h,w] gradient, got " + to_string(g.shape()));
  const std::size_t maps = g.dim(0), plane = g.dim(1) * g.dim(2);
  WeightVector weights{std::vector<double>(maps, 0.0)};
  for (std::size_t k = 0; k < maps; ++k) {
    double acc = 0.0;
    for (std::size_t e = k * plane; e < (k + 1) * plane; ++e) acc += g[e];
    weights.w[k] = acc / static_cast<double>(plane);
  }
  return weights;
}

Tensor cam_map(const WeightVector& weights, const Tensor& activations,
               const std::optional<std::vector<std::size_t>>& filters) {
  if (activations.rank() != 3 || weights.w.size() != activations.dim(0)) {
    throw ShapeError("cam_map needs one weight per feature map of " + to_string(activations.shape()) +
                     ", got " + std::to_string(weights.w.size()));
  }
  const std::size_t maps = activations.dim(0), height = activations.dim(1), width = activations.dim(2);
  std::vector<std::size_t> selected;
  if (filters) {
    for (std::size_t k : *filters) {
      if (k >= maps) {
        throw ParamError("filter index " + std::to_string(k) + " out of range [0, " +
                         std::to_string(maps) + ")");
      }
    }
    selected = *filters;
  } else {
    selected.resize(maps);
    for (std::size_t k = 0; k < maps; ++k) selected[k] = k;
  }

  Tensor out({height, width}, 0.0);
  const std::size_t plane = height * width;
  for (std::size_t k : selected) {
    const double wk = weights.w[k];
    for (std::size_t e = 0; e < plane; ++e) out[e] += wk * activations[k * plane + e];
  }
  return relu(out);
}

Tensor selection_mask(const NeuronSelection& selection, std::size_t height, std::size_t width) {
  validate_selection(selection, height, width);
  Tensor mask({height, width}, 0.0);
  if (selection.region) {
    const Box& b = *selection.box;
    for (std::size_t r = b.top; r <= b.bottom; ++r) {
      for (std::size_t c = b.left; c <= b.right; ++c) mask(r, c) = 1.0;
    }
  } else {
    for (const Coord& c : selection.coords) mask(c.row, c.col) = 1.0;
  }
  return mask;
}

MaskedInputs apply_selection(const Tensor& activations, const GradientTriple& triple,
                             const NeuronSelection& selection) {
  const Shape& shape = activations.shape();
  if (shape.size() != 3 || triple.d1.shape() != shape || triple.d2.shape() != shape ||
      triple.d3.shape() != shape) {
    throw ShapeError("selection needs activations and triple of one [K,h,w] shape");
  }
  const Tensor mask = selection_mask(selection, shape[1], shape[2]);
  return {masked(activations, mask),
          {masked(triple.d1, mask), masked(triple.d2, mask), masked(triple.d3, mask)}};
}

Tensor smooth_input_gradient(const Model& model, const Tensor& input, const SaliencyRequest& request) {
  if (request.samples == 0) throw ParamError("sample count must be at least 1");
  const ActivationTrace clean = forward(model, input);
  const ScoreMode score{request.score.kind, resolve_class(request.score, clean)};
  const double sigma = absolute_sigma(input, request.sigma_rel);

  RunningMean mean;
  for_each_sample(
      request.samples, request.threads,
      [&](std::size_t s) {
        GaussianRng rng(derive_seed(request.seed, s));
        return grad_wrt_input(model, add_gaussian_noise(input, sigma, rng), score);
      },
      [&](std::size_t, Tensor g) { mean.add(g); });
  return mean.value();
}

SaliencyMap smoothgrad_map(const Model& model, const Tensor& input, const SaliencyRequest& request) {
  if (request.method != Method::SmoothGrad && request.method != Method::Sensitivity) {
    throw ParamError("smoothgrad_map serves the sensitivity and smoothgrad methods only");
  }
  SaliencyRequest effective = request;
  if (request.method == Method::Sensitivity) {
    effective.samples = 1;
    effective.sigma_rel = 0.0;
  }
  validate_request(model, effective);
  const Tensor gradient = smooth_input_gradient(model, input, effective);

  // Input is [C,H,W]; collapse channels by max |g|.
  const Tensor stack = gradient.rank() == 3 ? gradient : gradient.reshaped({1, 1, gradient.size()});
  const std::size_t channels = stack.dim(0), height = stack.dim(1), width = stack.dim(2);
  Tensor raw({height, width}, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t e = 0; e < height * width; ++e) {
      raw[e] = std::max(raw[e], std::abs(stack[c * height * width + e]));
    }
  }

  const ActivationTrace clean = forward(model, input);
  SaliencyMap map;
  map.meta = make_meta(effective, clean, resolve_class(effective.score, clean));
  map.display = postprocess(raw, height, width);
  map.raw = std::move(raw);
  return map;
}

Tensor postprocess(const Tensor& raw, std::size_t input_h, std::size_t input_w) {
  Tensor display = bilinear_resize(raw, input_h, input_w);
  const double lo = display.min(), hi = display.max();
  if (!(hi > lo)) return Tensor(display.shape(), 0.0);
  const double span = hi - lo;
  for (double& v : display.data()) v = std::clamp((v - lo) / span, 0.0, 1.0);
  return display;
}

CamComponents cam_components(const Model& model, const Tensor& input, const SaliencyRequest& request) {
  if (!is_cam_method(request.method)) {
    throw ParamError("method " + std::string(to_string(request.method)) + " is not a CAM method");
  }
  validate_request(model, request);

  CamComponents out;
  if (request.method == Method::GradCam) {
    const ActivationTrace trace = forward(model, input);
    const std::size_t cls = resolve_class(request.score, trace);
    Tensor g = grad_wrt_layer(model, trace, {request.score.kind, cls}, request.layer);
    Tensor activations = trace.at(request.layer);
    if (request.neurons) {
      const Tensor mask = selection_mask(*request.neurons, g.dim(1), g.dim(2));
      g = masked(g, mask);
      activations = masked(activations, mask);
    }
    out.weights = gradcam_weights(g);
    out.activations = std::move(activations);
    out.meta = make_meta(request, trace, cls);
    return out;
  }

  SaliencyRequest effective = request;
  if (request.method == Method::GradCamPP) {
    effective.samples = 1;
    effective.sigma_rel = 0.0;
  }
  SmoothedTriple smoothed = smooth_triple(model, input, effective);
  GradientTriple triple = std::move(smoothed.triple);
  Tensor activations = std::move(smoothed.activations);
  if (request.neurons) {
    auto sel = apply_selection(activations, triple, *request.neurons);
    activations = std::move(sel.activations);
    triple = std::move(sel.triple);
  }
  out.weights = gradcampp_weights(compute_alpha(triple, activations), triple.d1);
  out.activations = std::move(activations);
  out.meta = make_meta(effective, forward(model, input), smoothed.class_index);
  return out;
}

SaliencyMap run(const Model& model, const Tensor& input, const SaliencyRequest& request) {
  if (!is_cam_method(request.method)) return smoothgrad_map(model, input, request);
  CamComponents parts = cam_components(model, input, request);
  SaliencyMap map;
  map.raw = cam_map(parts.weights, parts.activations, request.filters);
  map.display = postprocess(map.raw, input.dim(input.rank() - 2), input.dim(input.rank() - 1));
  map.meta = std::move(parts.meta);
  return map;
}

std::vector<SaliencyMap> run_per_filter(const Model& model, const Tensor& input,
                                        const SaliencyRequest& request) {
  if (!request.filters || !is_cam_method(request.method)) return {run(model, input, request)};
  const CamComponents parts = cam_components(model, input, request);
  std::vector<SaliencyMap> maps;
  maps.reserve(request.filters->size());
  for (std::size_t k : *request.filters) {
    SaliencyMap map;
    map.raw = cam_map(parts.weights, parts.activations, std::vector<std::size_t>{k});
    map.display = postprocess(map.raw, input.dim(input.rank() - 2), input.dim(input.rank() - 1));
    map.meta = parts.meta;
    map.meta.filters = std::vector<std::size_t>{k};
    maps.push_back(std::move(map));
  }
  return maps;
}

}  // namespace sgcam
