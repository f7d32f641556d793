#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sgcam/gradients.hpp"
#include "sgcam/network.hpp"
#include "sgcam/tensor.hpp"

namespace sgcam {

enum class Method { Sensitivity, SmoothGrad, GradCam, GradCamPP, SmoothGradCamPP };

std::string_view to_string(Method method);
std::optional<Method> parse_method(std::string_view name);
bool is_cam_method(Method method);

/// Which forward pass supplies the activations A^k that get weighted.
enum class ActivationSource {
  Original,  // the un-noised input
  Averaged,  // elementwise mean over the noisy samples
};

std::string_view to_string(ActivationSource source);
std::optional<ActivationSource> parse_activation_source(std::string_view name);

struct Coord {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

/// Inclusive rectangle in feature-map coordinates.
struct Box {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t bottom = 0;
  std::size_t right = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

/// Neurons to keep within every feature map; everything else is clipped
/// to zero. `region` selects the box interior, otherwise the listed coords.
struct NeuronSelection {
  std::vector<Coord> coords;
  std::optional<Box> box;
  bool region = false;

  static NeuronSelection points(std::vector<Coord> coords);
  static NeuronSelection within(Box box);

  friend bool operator==(const NeuronSelection&, const NeuronSelection&) = default;
};

struct SaliencyRequest {
  Method method = Method::SmoothGradCamPP;
  ScoreMode score{};
  std::string layer;
  std::size_t samples = 25;
  double sigma_rel = 0.15;  // noise std as a fraction of the input's max - min
  std::optional<std::vector<std::size_t>> filters;
  std::optional<NeuronSelection> neurons;
  ActivationSource activation_source = ActivationSource::Original;
  std::uint64_t seed = 0;
  // Worker threads for the per-sample passes. Results do not depend on it.
  std::size_t threads = 1;
};

/// Request echo plus what was resolved while running it.
struct SaliencyMeta {
  Method method = Method::SmoothGradCamPP;
  ScoreKind score = ScoreKind::ExpLogit;
  std::size_t class_index = 0;
  double class_score = 0.0;  // Y^c on the un-noised input
  double probability = 0.0;
  std::string layer;
  std::size_t samples = 1;
  double sigma_rel = 0.0;
  std::optional<std::vector<std::size_t>> filters;
  std::optional<NeuronSelection> neurons;
  ActivationSource activation_source = ActivationSource::Original;
  std::uint64_t seed = 0;
};

struct SaliencyMap {
  Tensor raw;      // [h,w], non-negative
  Tensor display;  // [H,W] at input resolution, in [0,1]
  SaliencyMeta meta;
};

struct AlphaMap {
  Tensor values;  // [K,h,w]
};

struct WeightVector {
  std::vector<double> w;  // one weight per feature map
};

/// Throws ParamError/UnknownLayer/NonConvLayer for requests the model
/// cannot serve.
void validate_request(const Model& model, const SaliencyRequest& request);

struct SmoothedTriple {
  GradientTriple triple;  // means of d1, d2, d3 over the samples
  Tensor activations;     // A^k per the request's activation source
  std::size_t class_index = 0;
};

/// Noise the input `samples` times and average the derivative triples of
/// the chosen layer. Sample s draws from its own stream seeded by
/// derive_seed(seed, s); means are reduced in ascending sample order, so
/// the result is the same for any thread count.
SmoothedTriple smooth_triple(const Model& model, const Tensor& input, const SaliencyRequest& request);

/// Per-location Grad-CAM++ coefficients:
///   alpha = d1 / (2 d2 + (sum over the map of A) d3),
/// zero wherever the denominator magnitude is below 1e-12.
AlphaMap compute_alpha(const GradientTriple& avg, const Tensor& activations);

/// W_k = sum_ij alpha * relu(d1).
WeightVector gradcampp_weights(const AlphaMap& alpha, const Tensor& d1);

/// W_k = spatial mean of g.
WeightVector gradcam_weights(const Tensor& g);

/// relu(sum_k W_k A^k) over the listed filters, or all of them.
Tensor cam_map(const WeightVector& weights, const Tensor& activations,
               const std::optional<std::vector<std::size_t>>& filters = std::nullopt);

/// 1 at selected spatial positions, 0 elsewhere, as an [h,w] tensor.
Tensor selection_mask(const NeuronSelection& selection, std::size_t height, std::size_t width);

struct MaskedInputs {
  Tensor activations;
  GradientTriple triple;
};

/// Zero every entry of A, d1, d2 and d3 outside the selection, in every
/// feature map.
MaskedInputs apply_selection(const Tensor& activations, const GradientTriple& triple,
                             const NeuronSelection& selection);

/// Mean input gradient over the noisy samples (SmoothGrad); shaped like
/// the input.
Tensor smooth_input_gradient(const Model& model, const Tensor& input, const SaliencyRequest& request);

/// SmoothGrad / sensitivity map. raw is the channelwise max of |gradient|.
SaliencyMap smoothgrad_map(const Model& model, const Tensor& input, const SaliencyRequest& request);

/// Bilinear resize to the input size, then min-max normalise to [0,1]. A
/// constant map becomes all zeros.
Tensor postprocess(const Tensor& raw, std::size_t input_h, std::size_t input_w);

/// Weights and activations of a CAM method, before the weighted sum.
struct CamComponents {
  WeightVector weights;
  Tensor activations;
  SaliencyMeta meta;
};

CamComponents cam_components(const Model& model, const Tensor& input, const SaliencyRequest& request);

/// Full pipeline for any method.
SaliencyMap run(const Model& model, const Tensor& input, const SaliencyRequest& request);

/// One map per listed filter, sharing a single smoothing pass. Without a
/// filter list, returns the single map of run().
std::vector<SaliencyMap> run_per_filter(const Model& model, const Tensor& input,
                                        const SaliencyRequest& request);

}  // namespace sgcam
