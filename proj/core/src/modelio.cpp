#include "sgcam/modelio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "sgcam/errors.hpp"
#include "sgcam/random.hpp"

namespace sgcam {
namespace {

using nlohmann::json;

Shape shape_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw FormatError(what + " must be a non-empty array");
  Shape shape;
  for (const auto& d : j) {
    if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) {
      throw FormatError(what + " entries must be positive integers");
    }
    shape.push_back(d.get<std::size_t>());
  }
  return shape;
}

std::size_t unsigned_field(const json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number_unsigned()) {
    throw FormatError(where + ": missing or non-integer '" + key + "'");
  }
  return it->get<std::size_t>();
}

std::optional<BlobSpan> span_from_json(const json& layer, const char* offset_key, const char* shape_key,
                                       const std::string& where) {
  const bool has_offset = layer.contains(offset_key), has_shape = layer.contains(shape_key);
  if (!has_offset && !has_shape) return std::nullopt;
  if (has_offset != has_shape) {
    throw FormatError(where + ": '" + offset_key + "' and '" + shape_key + "' must appear together");
  }
  return BlobSpan{unsigned_field(layer, offset_key, where), shape_from_json(layer.at(shape_key), where + " " + shape_key)};
}

bool has_weights(LayerKind kind) { return kind == LayerKind::Conv || kind == LayerKind::Dense; }

std::vector<LayerSpec> layers_from_manifest(const ModelManifest& m,
                                            const std::vector<float>* weights) {
  const auto fetch = [&](const BlobSpan& span) {
    Tensor t(span.shape, 0.0);
    if (weights) {
      const std::size_t first = span.offset / 4;
      for (std::size_t e = 0; e < t.size(); ++e) t[e] = static_cast<double>((*weights)[first + e]);
    }
    return t;
  };
  std::vector<LayerSpec> layers;
  for (const ManifestLayer& l : m.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        layers.push_back(LayerSpec::conv(l.name, fetch(*l.weight), fetch(*l.bias), l.stride, l.padding));
        break;
      case LayerKind::Dense:
        layers.push_back(LayerSpec::dense(l.name, fetch(*l.weight), fetch(*l.bias)));
        break;
      case LayerKind::MaxPool:
        layers.push_back(LayerSpec::maxpool(l.name, l.size, l.stride));
        break;
      case LayerKind::Relu:
        layers.push_back(LayerSpec::relu(l.name));
        break;
      case LayerKind::Flatten:
        layers.push_back(LayerSpec::flatten(l.name));
        break;
      case LayerKind::Softmax:
        layers.push_back(LayerSpec::softmax(l.name));
        break;
    }
  }
  return layers;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw Error("short write to " + path.string());
}

Tensor gaussian_tensor(Shape shape, double stddev, GaussianRng& rng) {
  Tensor t(std::move(shape), 0.0);
  for (double& v : t.data()) v = stddev * rng.normal();
  return t;
}

}  // namespace

std::size_t ModelManifest::blob_bytes() const {
  std::size_t elements = 0;
  for (const auto& l : layers) {
    if (l.weight) elements += element_count(l.weight->shape);
    if (l.bias) elements += element_count(l.bias->shape);
  }
  return 4 * elements;
}

ModelManifest parse_manifest(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("manifest must be a JSON object");
  ModelManifest m;
  const auto version = doc.find("format_version");
  if (version == doc.end() || !version->is_number_integer()) {
    throw FormatError("manifest lacks an integer 'format_version'");
  }
  m.format_version = version->get<int>();
  if (m.format_version != kManifestFormatVersion) {
    throw FormatError("unsupported manifest format_version " + std::to_string(m.format_version));
  }
  if (!doc.contains("input_shape")) throw FormatError("manifest lacks 'input_shape'");
  m.input_shape = shape_from_json(doc.at("input_shape"), "input_shape");
  m.class_count = unsigned_field(doc, "class_count", "manifest");
  const auto layers = doc.find("layers");
  if (layers == doc.end() || !layers->is_array()) throw FormatError("manifest lacks a 'layers' array");

  for (std::size_t i = 0; i < layers->size(); ++i) {
    const json& lj = (*layers)[i];
    const std::string where = "layer " + std::to_string(i);
    if (!lj.is_object()) throw FormatError(where + " is not an object");
    ManifestLayer l;
    if (!lj.contains("name") || !lj.at("name").is_string()) throw FormatError(where + " lacks a name");
    l.name = lj.at("name").get<std::string>();
    if (!lj.contains("kind") || !lj.at("kind").is_string()) throw FormatError(where + " lacks a kind");
    const auto kind_name = lj.at("kind").get<std::string>();
    const auto kind = parse_layer_kind(kind_name);
    if (!kind) throw FormatError("layer '" + l.name + "': unknown kind \"" + kind_name + "\"");
    l.kind = *kind;
    const json params = lj.value("params", json::object());
    if (!params.is_object()) throw FormatError("layer '" + l.name + "': params must be an object");
    if (l.kind == LayerKind::Conv) {
      l.stride = unsigned_field(params, "stride", "layer '" + l.name + "'");
      l.padding = unsigned_field(params, "padding", "layer '" + l.name + "'");
    } else if (l.kind == LayerKind::MaxPool) {
      l.size = unsigned_field(params, "size", "layer '" + l.name + "'");
      l.stride = unsigned_field(params, "stride", "layer '" + l.name + "'");
    }
    l.weight = span_from_json(lj, "weight_offset", "weight_shape", "layer '" + l.name + "'");
    l.bias = span_from_json(lj, "bias_offset", "bias_shape", "layer '" + l.name + "'");
    if (has_weights(l.kind) != (l.weight && l.bias)) {
      throw FormatError("layer '" + l.name + "': " +
                        (has_weights(l.kind) ? "weighted layer needs weight and bias spans"
                                             : "layer kind takes no weights"));
    }
    m.layers.push_back(std::move(l));
  }
  return m;
}

std::string manifest_to_json(const ModelManifest& m) {
  json doc;
  doc["format_version"] = m.format_version;
  doc["input_shape"] = m.input_shape;
  doc["class_count"] = m.class_count;
  json layers = json::array();
  for (const auto& l : m.layers) {
    json lj;
    lj["name"] = l.name;
    lj["kind"] = std::string(to_string(l.kind));
    json params = json::object();
    if (l.kind == LayerKind::Conv) {
      params["stride"] = l.stride;
      params["padding"] = l.padding;
    } else if (l.kind == LayerKind::MaxPool) {
      params["size"] = l.size;
      params["stride"] = l.stride;
    }
    lj["params"] = params;
    if (l.weight) {
      lj["weight_offset"] = l.weight->offset;
      lj["weight_shape"] = l.weight->shape;
    }
    if (l.bias) {
      lj["bias_offset"] = l.bias->offset;
      lj["bias_shape"] = l.bias->shape;
    }
    layers.push_back(std::move(lj));
  }
  doc["layers"] = std::move(layers);
  return doc.dump(2) + "\n";
}

ShapeTable validate_manifest(const ModelManifest& m) {
  std::size_t next = 0;
  for (const auto& l : m.layers) {
    for (const auto* span : {&l.weight, &l.bias}) {
      if (!*span) continue;
      const BlobSpan& s = **span;
      if (s.offset % 4 != 0) throw FormatError("layer '" + l.name + "': offset not a multiple of 4");
      if (s.offset < next) {
        throw FormatError("layer '" + l.name + "': span at byte " + std::to_string(s.offset) +
                          " overlaps the previous one ending at " + std::to_string(next));
      }
      next = s.offset + 4 * element_count(s.shape);
    }
  }
  if (next != m.blob_bytes()) {
    throw FormatError("weight spans end at byte " + std::to_string(next) + " but declare " +
                      std::to_string(m.blob_bytes()) + " bytes of elements");
  }
  return validate(layers_from_manifest(m, nullptr), m.input_shape, m.class_count);
}

ModelManifest describe(const Model& model) {
  ModelManifest m;
  m.input_shape = model.input_shape();
  m.class_count = model.class_count();
  std::size_t offset = 0;
  const auto place = [&](const Tensor& t) {
    BlobSpan span{offset, t.shape()};
    offset += 4 * t.size();
    return span;
  };
  for (const auto& layer : model.layers()) {
    ManifestLayer l;
    l.name = layer.name;
    l.kind = layer.kind;
    if (layer.kind == LayerKind::Conv) {
      const auto& p = layer.conv_params();
      l.stride = p.stride;
      l.padding = p.padding;
      l.weight = place(p.kernels);
      l.bias = place(p.bias);
    } else if (layer.kind == LayerKind::Dense) {
      const auto& p = layer.dense_params();
      l.weight = place(p.weights);
      l.bias = place(p.bias);
    } else if (layer.kind == LayerKind::MaxPool) {
      l.size = layer.pool_params().size;
      l.stride = layer.pool_params().stride;
    }
    m.layers.push_back(std::move(l));
  }
  return m;
}

std::vector<std::uint8_t> pack_weights(const Model& model) {
  std::vector<std::uint8_t> blob;
  const auto append = [&](const Tensor& t) {
    for (double v : t.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) blob.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  };
  for (const auto& layer : model.layers()) {
    if (layer.kind == LayerKind::Conv) {
      append(layer.conv_params().kernels);
      append(layer.conv_params().bias);
    } else if (layer.kind == LayerKind::Dense) {
      append(layer.dense_params().weights);
      append(layer.dense_params().bias);
    }
  }
  return blob;
}

Model load_model(const std::filesystem::path& manifest_path, const std::filesystem::path& weights_path) {
  const ModelManifest m = parse_manifest(read_file(manifest_path));
  validate_manifest(m);

  const std::string bytes = read_file(weights_path);
  const std::size_t expected = m.blob_bytes();
  if (bytes.size() != expected) {
    throw LengthError("weight blob " + weights_path.string() + " holds " + std::to_string(bytes.size()) +
                      " bytes, manifest expects " + std::to_string(expected));
  }
  std::vector<float> values(expected / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
    }
    values[i] = std::bit_cast<float>(bits);
    if (!std::isfinite(values[i])) {
      throw FormatError("non-finite weight at byte " + std::to_string(4 * i) + " of " + weights_path.string());
    }
  }
  return Model(layers_from_manifest(m, &values), m.input_shape, m.class_count);
}

void save_model(const Model& model, const std::filesystem::path& manifest_path,
                const std::filesystem::path& weights_path) {
  const std::string manifest = manifest_to_json(describe(model));
  const auto blob = pack_weights(model);
  write_file(manifest_path, manifest.data(), manifest.size());
  write_file(weights_path, blob.data(), blob.size());
}

Model random_fixture(std::uint64_t seed, std::size_t classes) {
  if (classes < 2) throw ParamError("random fixture needs at least 2 classes");
  GaussianRng rng(seed);
  constexpr std::size_t kMaps = 4;
  Tensor kernels = gaussian_tensor({kMaps, 1, 3, 3}, std::sqrt(2.0 / 9.0), rng);
  Tensor conv_bias = gaussian_tensor({kMaps}, 0.1, rng);
  const std::size_t flat = kMaps * 7 * 7;
  Tensor weights = gaussian_tensor({classes, flat}, 1.0 / std::sqrt(static_cast<double>(flat)), rng);
  Tensor dense_bias = gaussian_tensor({classes}, 0.1, rng);

  std::vector<LayerSpec> layers;
  layers.push_back(LayerSpec::conv("conv1", std::move(kernels), std::move(conv_bias)));
  layers.push_back(LayerSpec::relu("relu1"));
  layers.push_back(LayerSpec::maxpool("pool1", 2, 2));
  layers.push_back(LayerSpec::flatten("flatten"));
  layers.push_back(LayerSpec::dense("fc", std::move(weights), std::move(dense_bias)));
  layers.push_back(LayerSpec::softmax("softmax"));
  return Model(std::move(layers), {1, 16, 16}, classes);
}

Model detector_fixture() {
  constexpr std::size_t n = kDetectorInputSize;
  Tensor kernels({2, 1, 3, 3}, 0.0);
  for (std::size_t e = 0; e < 9; ++e) kernels[e] = 1.0 / 9.0;
  // Filter 1: horizontal edge response [-1 0 1] on each row.
  for (std::size_t r = 0; r < 3; ++r) {
    kernels[9 + r * 3 + 0] = -1.0;
    kernels[9 + r * 3 + 1] = 0.0;
    kernels[9 + r * 3 + 2] = 1.0;
  }
  Tensor weights({2, 2 * n * n}, 0.0);
  const double per_pixel = 1.0 / static_cast<double>(kDetectorSquare * kDetectorSquare);
  for (std::size_t e = 0; e < n * n; ++e) weights(0, e) = per_pixel;
  Tensor bias = Tensor::vector({0.25, 0.0});

  std::vector<LayerSpec> layers;
  layers.push_back(LayerSpec::conv("conv1", std::move(kernels), Tensor({2}, 0.0), 1, 1));
  layers.push_back(LayerSpec::flatten("flatten"));
  layers.push_back(LayerSpec::dense("fc", std::move(weights), std::move(bias)));
  layers.push_back(LayerSpec::softmax("softmax"));
  return Model(std::move(layers), {1, n, n}, 2);
}

Tensor detector_image(std::size_t top, std::size_t left) {
  constexpr std::size_t n = kDetectorInputSize;
  if (top + kDetectorSquare > n || left + kDetectorSquare > n) {
    throw ParamError("square at (" + std::to_string(top) + "," + std::to_string(left) +
                     ") does not fit in the detector input");
  }
  Tensor img({1, n, n}, 0.0);
  for (std::size_t r = top; r < top + kDetectorSquare; ++r) {
    for (std::size_t c = left; c < left + kDetectorSquare; ++c) img(0, r, c) = 1.0;
  }
  return img;
}

Model build_fixture(FixtureKind kind, std::uint64_t seed, std::size_t classes) {
  return kind == FixtureKind::Detector ? detector_fixture() : random_fixture(seed, classes);
}

}  // namespace sgcam
