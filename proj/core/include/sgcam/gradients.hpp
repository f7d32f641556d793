#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

#include "sgcam/network.hpp"
#include "sgcam/tensor.hpp"

namespace sgcam {

/// Which scalar plays the role of the class score Y^c.
enum class ScoreKind {
  RawLogit,     // S^c
  ExpLogit,     // exp(S^c), the usual choice for Grad-CAM++
  Probability,  // softmax(S)^c; first-order gradients only
};

std::string_view to_string(ScoreKind kind);

struct ScoreMode {
  ScoreKind kind = ScoreKind::ExpLogit;
  std::optional<std::size_t> class_index;  // nullopt: argmax of the logits
};

/// Explicit class after bounds checking, or the argmax of the trace logits.
std::size_t resolve_class(const ScoreMode& score, const ActivationTrace& trace);

/// Y^c evaluated on a logit vector.
double class_score(ScoreKind kind, const Tensor& logits, std::size_t cls);

/// First, second and third derivatives of the class score with respect to
/// one layer's activation stack [K,h,w].
struct GradientTriple {
  Tensor d1, d2, d3;
};

/// dY^c / d(output of `layer`), by a reverse sweep through every later
/// layer using the trace's ReLU gates and pool argmaxes. `layer` must be a
/// conv layer.
Tensor grad_wrt_layer(const Model& model, const ActivationTrace& trace, const ScoreMode& score,
                      std::string_view layer);

/// dY^c / d(input): the sensitivity map.
Tensor grad_wrt_input(const Model& model, const ActivationTrace& trace, const ScoreMode& score);
Tensor grad_wrt_input(const Model& model, const Tensor& input, const ScoreMode& score);

/// Closed-form higher derivatives from the raw-logit gradient `g`.
///
/// The tail after a conv layer is piecewise linear, so d^2 S / dA^2 = 0 and
/// for Y = exp(S) every higher derivative is exp(S) times a power of g.
///   ExpLogit: d1 = e^S g,  d2 = e^S g^2,  d3 = e^S g^3
///   RawLogit: d1 = g,      d2 = 0,        d3 = 0
/// Probability mode throws Unsupported.
GradientTriple higher_order_triple(const Tensor& g, double logit, ScoreKind kind);

/// Central-difference estimate of dY^c / d(output of `layer`) with ReLU
/// gates and pool argmaxes frozen at the trace's values. Verification
/// oracle for grad_wrt_layer; never used on the production path.
Tensor finite_diff_layer_grad(const Model& model, const ActivationTrace& trace,
                              const ScoreMode& score, std::string_view layer, double h = 1e-4);

/// Same oracle with respect to the model input.
Tensor finite_diff_input_grad(const Model& model, const ActivationTrace& trace,
                              const ScoreMode& score, double h = 1e-4);

}  // namespace sgcam
