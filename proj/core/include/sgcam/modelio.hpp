#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sgcam/network.hpp"
#include "sgcam/tensor.hpp"

namespace sgcam {

inline constexpr int kManifestFormatVersion = 1;

/// Location of one tensor inside the weight blob. Offsets are in bytes;
/// elements are little-endian binary32.
struct BlobSpan {
  std::size_t offset = 0;
  Shape shape;
};

struct ManifestLayer {
  std::string name;
  LayerKind kind = LayerKind::Relu;
  std::size_t stride = 1;   // conv, maxpool
  std::size_t padding = 0;  // conv
  std::size_t size = 2;     // maxpool
  std::optional<BlobSpan> weight;
  std::optional<BlobSpan> bias;
};

/// JSON side of a stored model:
///   { "format_version": 1, "input_shape": [C,H,W], "class_count": N,
///     "layers": [ { "name", "kind", "params",
///                   "weight_offset"?, "weight_shape"?,
///                   "bias_offset"?, "bias_shape"? } ] }
struct ModelManifest {
  int format_version = kManifestFormatVersion;
  Shape input_shape;
  std::size_t class_count = 0;
  std::vector<ManifestLayer> layers;

  /// Bytes the blob must hold: 4 x total element count.
  std::size_t blob_bytes() const;
};

ModelManifest parse_manifest(const std::string& json_text);
std::string manifest_to_json(const ModelManifest& manifest);

/// Span layout checks plus shape inference using declared shapes only;
/// never touches the blob.
ShapeTable validate_manifest(const ModelManifest& manifest);

/// Manifest and blob bytes for a model, weights narrowed to binary32.
ModelManifest describe(const Model& model);
std::vector<std::uint8_t> pack_weights(const Model& model);

Model load_model(const std::filesystem::path& manifest_path, const std::filesystem::path& weights_path);
void save_model(const Model& model, const std::filesystem::path& manifest_path,
                const std::filesystem::path& weights_path);

// Test and demo models.

enum class FixtureKind { Random, Detector };

/// conv1(4@3x3) -> relu1 -> pool1(2) -> flatten -> fc(classes) -> softmax on
/// a 1x16x16 input, weights drawn from GaussianRng(seed).
Model random_fixture(std::uint64_t seed, std::size_t classes = 10);

inline constexpr std::size_t kDetectorInputSize = 32;
inline constexpr std::size_t kDetectorSquare = 8;

/// Two-class model on a 1x32x32 input whose ground-truth evidence is known:
/// conv1 filter 0 is a 3x3 all-positive brightness detector (padding 1),
/// filter 1 a signed edge filter; class 0 sums feature map 0 uniformly,
/// class 1 has an all-zero row. conv1 -> flatten -> fc -> softmax.
Model detector_fixture();

/// Black 1x32x32 image with an 8x8 white square at (top, left).
Tensor detector_image(std::size_t top, std::size_t left);

Model build_fixture(FixtureKind kind, std::uint64_t seed = 0, std::size_t classes = 10);

}  // namespace sgcam
