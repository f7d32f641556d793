#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <thread>

#include "sgcam/errors.hpp"
#include "sgcam/imageio.hpp"
#include "sgcam/modelio.hpp"
#include "sgcam/network.hpp"
#include "sgcam/random.hpp"

namespace sgcam::cli {
namespace {

namespace fs = std::filesystem;

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = text.find(sep, start);
    parts.push_back(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return parts;
}

template <class T>
T parse_number(std::string_view text, const char* what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw UsageError(std::string("invalid ") + what + ": '" + std::string(text) + "'");
  }
  return value;
}

std::string shortest(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

Method method_or_throw(std::string_view name) {
  if (auto m = parse_method(name)) return *m;
  throw UsageError("unknown method: " + std::string(name));
}

ScoreKind score_or_throw(std::string_view name) {
  if (name == "logit") return ScoreKind::RawLogit;
  if (name == "exp") return ScoreKind::ExpLogit;
  throw UsageError("unknown score mode: " + std::string(name) + " (expected logit or exp)");
}

ActivationSource source_or_throw(std::string_view name) {
  if (auto s = parse_activation_source(name)) return *s;
  throw UsageError("unknown activation source: " + std::string(name));
}

std::optional<std::size_t> class_or_throw(std::string_view text) {
  if (text == "auto") return std::nullopt;
  return parse_number<std::size_t>(text, "class");
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out.empty() ? "(none)" : out;
}

struct ExplainFlags {
  CliConfig config;
  std::string method = "smooth-gradcampp";
  std::string class_spec = "auto";
  std::string filters, neurons, region_box;
  std::string activation_source = "original";
  std::string score = "exp";
};

CliConfig finish(ExplainFlags& f, bool has_filters, bool has_neurons, bool has_box) {
  CliConfig c = f.config;
  c.method = method_or_throw(f.method);
  c.class_index = class_or_throw(f.class_spec);
  c.activation_source = source_or_throw(f.activation_source);
  c.score = score_or_throw(f.score);
  if (has_filters) c.filters = parse_filters(f.filters);
  if (has_neurons) c.neurons = parse_neurons(f.neurons);
  if (has_box) c.region_box = parse_box(f.region_box);
  if (c.samples == 0) throw UsageError("--samples must be at least 1");
  if (!(c.sigma >= 0.0 && c.sigma < 1.0)) throw UsageError("--sigma must lie in [0, 1)");
  if (!(c.blend >= 0.0 && c.blend <= 1.0)) throw UsageError("--blend must lie in [0, 1]");
  if (!is_cam_method(c.method) && (c.filters || c.neurons || c.region_box)) {
    throw UsageError("--filters, --neurons and --region-box apply only to CAM methods");
  }
  return c;
}

void ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
}

int explain(const CliConfig& config, std::ostream& out) {
  const Model model = load_model(config.model_path, config.weights_path);
  const RgbImage image = read_ppm(config.image_path);
  const Tensor input = to_input_tensor(image, model.input_shape());

  SaliencyRequest request = to_request(config);
  const auto conv_layers = list_conv_layers(model);
  if (is_cam_method(request.method)) {
    if (request.layer.empty()) {
      if (conv_layers.empty()) throw NonConvLayer("model has no conv layer to visualise");
      request.layer = conv_layers.back();
    }
    const auto idx = model.index_of(request.layer);
    if (!idx || model.layers()[*idx].kind != LayerKind::Conv) {
      throw UnknownLayer("unknown layer: " + request.layer + " (conv layers: " + join_names(conv_layers) + ")");
    }
  }

  // Everything is computed before the first file is written.
  const SaliencyMap map = run(model, input, request);
  std::vector<SaliencyMap> per_filter;
  if (request.filters) per_filter = run_per_filter(model, input, request);

  CliConfig echoed = config;
  echoed.layer = request.layer;
  const std::string meta = format_meta_line(echoed, &map.meta);
  const std::string heat = encode_ppm(render_heatmap(map.display));
  const std::string blended = encode_ppm(overlay(image, map.display, config.blend));
  const std::string csv = format_map_csv(map.display, meta);

  const fs::path dir(config.out_dir);
  ensure_out_dir(dir);
  const auto dump = [&](const fs::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("cannot write " + path.string());
  };
  dump(dir / "heatmap.ppm", heat);
  dump(dir / "overlay.ppm", blended);
  dump(dir / "map.csv", csv);
  for (std::size_t i = 0; i < per_filter.size(); ++i) {
    write_ppm(render_heatmap(per_filter[i].display),
              dir / ("heatmap_f" + std::to_string((*request.filters)[i]) + ".ppm"));
  }

  char line[160];
  std::snprintf(line, sizeof line, "class=%zu score=%.9g probability=%.9g\n", map.meta.class_index,
                map.meta.class_score, map.meta.probability);
  out << line;
  return kExitOk;
}

int list_layers(const std::string& model_path, const std::string& weights_path, std::ostream& out) {
  std::vector<std::string> names;
  if (weights_path.empty()) {
    std::ifstream in(model_path, std::ios::binary);
    if (!in) throw Error("cannot open " + model_path);
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    const ModelManifest manifest = parse_manifest(text);
    validate_manifest(manifest);
    for (const auto& l : manifest.layers) {
      if (l.kind == LayerKind::Conv) names.push_back(l.name);
    }
  } else {
    names = list_conv_layers(load_model(model_path, weights_path));
  }
  for (const auto& n : names) out << n << '\n';
  return kExitOk;
}

int make_fixture(const std::string& kind, std::uint64_t seed, std::size_t classes,
                 const std::string& model_path, const std::string& weights_path,
                 const std::string& image_path, std::ostream& out) {
  FixtureKind fixture;
  if (kind == "random") {
    fixture = FixtureKind::Random;
  } else if (kind == "detector") {
    fixture = FixtureKind::Detector;
  } else {
    throw UsageError("unknown fixture kind: " + kind + " (expected random or detector)");
  }
  if (fixture == FixtureKind::Random && classes < 2) throw UsageError("--classes must be at least 2");
  const Model model = build_fixture(fixture, seed, classes);
  save_model(model, model_path, weights_path);
  out << "wrote " << model_path << " and " << weights_path << '\n';

  if (!image_path.empty()) {
    Tensor sample;
    if (fixture == FixtureKind::Detector) {
      sample = detector_image(4, 4);
    } else {
      GaussianRng rng(derive_seed(seed, 0xFFFF));
      sample = Tensor(model.input_shape(), 0.0);
      for (double& v : sample.data()) v = rng.uniform();
    }
    write_ppm(from_input_tensor(sample), image_path);
    out << "wrote " << image_path << '\n';
  }
  return kExitOk;
}

}  // namespace

std::vector<std::size_t> parse_filters(std::string_view text) {
  std::vector<std::size_t> filters;
  if (text.empty()) return filters;
  for (auto part : split(text, ',')) filters.push_back(parse_number<std::size_t>(part, "filter index"));
  return filters;
}

std::vector<Coord> parse_neurons(std::string_view text) {
  std::vector<Coord> coords;
  if (text.empty()) return coords;
  for (auto part : split(text, ',')) {
    const auto rc = split(part, ':');
    if (rc.size() != 2) throw UsageError("neuron must be row:col, got '" + std::string(part) + "'");
    coords.push_back({parse_number<std::size_t>(rc[0], "neuron row"), parse_number<std::size_t>(rc[1], "neuron col")});
  }
  return coords;
}

Box parse_box(std::string_view text) {
  const auto parts = split(text, ':');
  if (parts.size() != 4) throw UsageError("region box must be top:left:bottom:right, got '" + std::string(text) + "'");
  Box b{parse_number<std::size_t>(parts[0], "box top"), parse_number<std::size_t>(parts[1], "box left"),
        parse_number<std::size_t>(parts[2], "box bottom"), parse_number<std::size_t>(parts[3], "box right")};
  if (b.top > b.bottom || b.left > b.right) throw UsageError("region box corners are inverted");
  return b;
}

std::string format_filters(const std::vector<std::size_t>& filters) {
  std::string out;
  for (std::size_t i = 0; i < filters.size(); ++i) out += (i ? "," : "") + std::to_string(filters[i]);
  return out;
}

std::string format_neurons(const std::vector<Coord>& coords) {
  std::string out;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    out += (i ? "," : "") + std::to_string(coords[i].row) + ":" + std::to_string(coords[i].col);
  }
  return out;
}

std::string format_box(const Box& b) {
  return std::to_string(b.top) + ":" + std::to_string(b.left) + ":" + std::to_string(b.bottom) + ":" +
         std::to_string(b.right);
}

SaliencyRequest to_request(const CliConfig& c) {
  if (c.neurons && c.region_box) throw UsageError("--neurons and --region-box are mutually exclusive");
  SaliencyRequest r;
  r.method = c.method;
  r.score = {c.score, c.class_index};
  r.layer = c.layer;
  r.samples = c.samples;
  r.sigma_rel = c.sigma;
  r.filters = c.filters;
  if (c.neurons) r.neurons = NeuronSelection::points(*c.neurons);
  if (c.region_box) r.neurons = NeuronSelection::within(*c.region_box);
  r.activation_source = c.activation_source;
  r.seed = c.seed;
  r.threads = std::max(1u, std::thread::hardware_concurrency());
  return r;
}

std::string format_meta_line(const CliConfig& c, const SaliencyMeta* result) {
  std::string line;
  const auto put = [&](std::string_view key, const std::string& value) {
    if (!line.empty()) line += ' ';
    line += key;
    line += '=';
    line += value;
  };
  put("method", std::string(to_string(c.method)));
  put("class", c.class_index ? std::to_string(*c.class_index) : "auto");
  put("layer", c.layer);
  put("samples", std::to_string(c.samples));
  put("sigma", shortest(c.sigma));
  put("filters", c.filters ? format_filters(*c.filters) : "all");
  put("neurons", c.neurons ? format_neurons(*c.neurons) : "none");
  put("region-box", c.region_box ? format_box(*c.region_box) : "none");
  put("activation-source", std::string(to_string(c.activation_source)));
  put("score", std::string(to_string(c.score)));
  put("seed", std::to_string(c.seed));
  put("blend", shortest(c.blend));
  if (result) {
    put("chosen-class", std::to_string(result->class_index));
    put("class-score", shortest(result->class_score));
  }
  return line;
}

CliConfig parse_meta_line(std::string_view line) {
  while (!line.empty() && (line.front() == '#' || line.front() == ' ')) line.remove_prefix(1);
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  CliConfig c;
  for (auto token : split(line, ' ')) {
    if (token.empty()) continue;
    const std::size_t eq = token.find('=');
    if (eq == std::string_view::npos) throw UsageError("malformed meta token '" + std::string(token) + "'");
    const auto key = token.substr(0, eq), value = token.substr(eq + 1);
    if (key == "method") {
      c.method = method_or_throw(value);
    } else if (key == "class") {
      c.class_index = class_or_throw(value);
    } else if (key == "layer") {
      c.layer = std::string(value);
    } else if (key == "samples") {
      c.samples = parse_number<std::size_t>(value, "samples");
    } else if (key == "sigma") {
      c.sigma = parse_number<double>(value, "sigma");
    } else if (key == "filters") {
      if (value != "all") c.filters = parse_filters(value);
    } else if (key == "neurons") {
      if (value != "none") c.neurons = parse_neurons(value);
    } else if (key == "region-box") {
      if (value != "none") c.region_box = parse_box(value);
    } else if (key == "activation-source") {
      c.activation_source = source_or_throw(value);
    } else if (key == "score") {
      c.score = score_or_throw(value);
    } else if (key == "seed") {
      c.seed = parse_number<std::uint64_t>(value, "seed");
    } else if (key == "blend") {
      c.blend = parse_number<double>(value, "blend");
    } else if (key != "chosen-class" && key != "class-score") {
      throw UsageError("unknown meta key '" + std::string(key) + "'");
    }
  }
  return c;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Class-discriminative saliency maps for small CNNs"};
  app.require_subcommand(1);

  ExplainFlags ef;
  auto* explain_cmd = app.add_subcommand("explain", "Compute a saliency map and write heatmap/overlay/CSV");
  explain_cmd->add_option("--model", ef.config.model_path, "Model manifest (JSON)")->required();
  explain_cmd->add_option("--weights", ef.config.weights_path, "Weight blob")->required();
  explain_cmd->add_option("--image", ef.config.image_path, "Input image (binary PPM)")->required();
  explain_cmd->add_option("--out", ef.config.out_dir, "Output directory")->required();
  explain_cmd->add_option("--method", ef.method, "sensitivity|smoothgrad|gradcam|gradcampp|smooth-gradcampp");
  explain_cmd->add_option("--class", ef.class_spec, "Class index or 'auto'");
  explain_cmd->add_option("--layer", ef.config.layer, "Conv layer to visualise (default: last conv layer)");
  explain_cmd->add_option("--samples", ef.config.samples, "Noisy samples n");
  explain_cmd->add_option("--sigma", ef.config.sigma, "Noise std relative to input range");
  auto* filters_opt = explain_cmd->add_option("--filters", ef.filters, "Feature map indices i,j,k");
  auto* neurons_opt = explain_cmd->add_option("--neurons", ef.neurons, "Neuron coordinates r1:c1,r2:c2");
  auto* box_opt = explain_cmd->add_option("--region-box", ef.region_box, "Neuron region top:left:bottom:right");
  neurons_opt->excludes(box_opt);
  explain_cmd->add_option("--activation-source", ef.activation_source, "original|averaged");
  explain_cmd->add_option("--score", ef.score, "logit|exp");
  explain_cmd->add_option("--seed", ef.config.seed, "Noise seed");
  explain_cmd->add_option("--blend", ef.config.blend, "Overlay blend in [0,1]");

  std::string ll_model, ll_weights;
  auto* list_cmd = app.add_subcommand("list-layers", "Print conv layer names in forward order");
  list_cmd->add_option("--model", ll_model, "Model manifest (JSON)")->required();
  list_cmd->add_option("--weights", ll_weights, "Weight blob (optional)");

  std::string fx_kind = "random", fx_model, fx_weights, fx_image;
  std::uint64_t fx_seed = 0;
  std::size_t fx_classes = 10;
  auto* fixture_cmd = app.add_subcommand("make-fixture", "Write a fixture model to disk");
  fixture_cmd->add_option("--kind", fx_kind, "random|detector");
  fixture_cmd->add_option("--seed", fx_seed, "Weight seed (random fixture)");
  fixture_cmd->add_option("--classes", fx_classes, "Class count (random fixture)");
  fixture_cmd->add_option("--model", fx_model, "Manifest output path")->required();
  fixture_cmd->add_option("--weights", fx_weights, "Weight blob output path")->required();
  fixture_cmd->add_option("--image", fx_image, "Also write a sample input image (PPM)");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (explain_cmd->parsed()) {
      const CliConfig config = finish(ef, filters_opt->count() > 0, neurons_opt->count() > 0, box_opt->count() > 0);
      return explain(config, out);
    }
    if (list_cmd->parsed()) return list_layers(ll_model, ll_weights, out);
    return make_fixture(fx_kind, fx_seed, fx_classes, fx_model, fx_weights, fx_image, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const sgcam::Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace sgcam::cli
