#include "sgcam/imageio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "sgcam/errors.hpp"

namespace sgcam {
namespace {

[[noreturn]] void bad_ppm(std::size_t offset, const std::string& what) {
  throw FormatError("PPM byte " + std::to_string(offset) + ": " + what);
}

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > 1'000'000'000) bad_ppm(start, std::string(what) + " is too large");
      ++pos_;
    }
    if (pos_ == start) bad_ppm(start, std::string("expected ") + what);
    return value;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }
  bool at_space() const {
    return pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]));
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::uint8_t to_byte(double channel) {
  return static_cast<std::uint8_t>(std::round(std::clamp(channel, 0.0, 255.0)));
}

void check_heat(const Tensor& heat, std::size_t height, std::size_t width) {
  if (heat.rank() != 2 || heat.dim(0) != height || heat.dim(1) != width) {
    throw ShapeError("heat map " + to_string(heat.shape()) + " does not match " +
                     std::to_string(height) + "x" + std::to_string(width) + " image");
  }
}

void write_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace

RgbImage::RgbImage(std::size_t w, std::size_t h, Rgb fill) : width(w), height(h), pixels(3 * w * h) {
  for (std::size_t i = 0; i < w * h; ++i) std::copy(fill.begin(), fill.end(), pixels.begin() + 3 * i);
}

Rgb RgbImage::at(std::size_t row, std::size_t col) const {
  const std::size_t i = 3 * (row * width + col);
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void RgbImage::set(std::size_t row, std::size_t col, Rgb value) {
  std::copy(value.begin(), value.end(), pixels.begin() + 3 * (row * width + col));
}

RgbImage parse_ppm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') bad_ppm(0, "missing P6 magic");
  HeaderReader header(bytes.substr(2));
  const std::size_t width = header.number("width");
  const std::size_t height = header.number("height");
  const std::size_t maxval_at = header.pos() + 2;
  const std::size_t maxval = header.number("maxval");
  if (width == 0 || height == 0) bad_ppm(2, "image dimensions must be positive");
  if (maxval != 255) bad_ppm(maxval_at, "unsupported maxval " + std::to_string(maxval) + " (only 255)");
  if (!header.at_space()) bad_ppm(header.pos() + 2, "expected whitespace before pixel data");
  header.advance();

  const std::size_t data_at = header.pos() + 2;
  const std::size_t need = 3 * width * height;
  if (bytes.size() - data_at != need) {
    bad_ppm(data_at, "expected " + std::to_string(need) + " pixel bytes, found " +
                         std::to_string(bytes.size() - data_at));
  }
  RgbImage img(width, height);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(data_at), bytes.end(), img.pixels.begin());
  return img;
}

std::string encode_ppm(const RgbImage& img) {
  if (img.pixels.size() != 3 * img.width * img.height || img.width == 0 || img.height == 0) {
    throw ShapeError("image buffer does not match its dimensions");
  }
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_ppm(bytes);
}

void write_ppm(const RgbImage& img, const std::filesystem::path& path) {
  write_bytes(path, encode_ppm(img));
}

Tensor to_input_tensor(const RgbImage& img, const Shape& model_input) {
  if (model_input.size() != 3 || (model_input[0] != 1 && model_input[0] != 3) ||
      model_input[1] != img.height || model_input[2] != img.width) {
    throw ShapeError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                     " does not fit model input " + to_string(model_input) +
                     " (expects [1|3, height, width])");
  }
  const std::size_t plane = img.width * img.height;
  Tensor t(model_input, 0.0);
  for (std::size_t i = 0; i < plane; ++i) {
    const double r = img.pixels[3 * i] / 255.0;
    const double g = img.pixels[3 * i + 1] / 255.0;
    const double b = img.pixels[3 * i + 2] / 255.0;
    if (model_input[0] == 1) {
      t[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    } else {
      t[i] = r;
      t[plane + i] = g;
      t[2 * plane + i] = b;
    }
  }
  return t;
}

RgbImage from_input_tensor(const Tensor& input) {
  if (input.rank() != 3 || (input.dim(0) != 1 && input.dim(0) != 3)) {
    throw ShapeError("cannot render tensor " + to_string(input.shape()) + " as an image");
  }
  const std::size_t height = input.dim(1), width = input.dim(2), plane = height * width;
  RgbImage img(width, height);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = input.dim(0) == 1 ? input[i] : input[c * plane + i];
      img.pixels[3 * i + c] = to_byte(255.0 * v);
    }
  }
  return img;
}

Rgb colormap(double v) {
  v = std::clamp(std::isnan(v) ? 0.0 : v, 0.0, 1.0);
  const auto ramp = [v](double centre) {
    return to_byte(255.0 * std::clamp(1.5 - std::abs(4.0 * v - centre), 0.0, 1.0));
  };
  return {ramp(3.0), ramp(2.0), ramp(1.0)};
}

RgbImage render_heatmap(const Tensor& heat) {
  if (heat.rank() != 2) throw ShapeError("heat map must be [H,W], got " + to_string(heat.shape()));
  RgbImage img(heat.dim(1), heat.dim(0));
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) img.set(r, c, colormap(heat(r, c)));
  }
  return img;
}

RgbImage overlay(const RgbImage& base, const Tensor& heat, double blend) {
  if (!(blend >= 0.0 && blend <= 1.0)) throw ParamError("blend must lie in [0, 1]");
  check_heat(heat, base.height, base.width);
  RgbImage out = base;
  for (std::size_t r = 0; r < base.height; ++r) {
    for (std::size_t c = 0; c < base.width; ++c) {
      const Rgb hot = colormap(heat(r, c));
      const Rgb cold = base.at(r, c);
      Rgb mixed;
      for (std::size_t ch = 0; ch < 3; ++ch) mixed[ch] = to_byte((1.0 - blend) * cold[ch] + blend * hot[ch]);
      out.set(r, c, mixed);
    }
  }
  return out;
}

std::string format_map_csv(const Tensor& map, std::string_view header) {
  if (map.rank() != 2) throw ShapeError("CSV export needs an [h,w] map, got " + to_string(map.shape()));
  std::string out;
  if (!header.empty()) {
    out += "# ";
    out += header;
    out += '\n';
  }
  char buf[40];
  for (std::size_t r = 0; r < map.dim(0); ++r) {
    for (std::size_t c = 0; c < map.dim(1); ++c) {
      if (c) out += ',';
      std::snprintf(buf, sizeof buf, "%#.9g", map(r, c));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void write_map_csv(const Tensor& map, const std::filesystem::path& path, std::string_view header) {
  write_bytes(path, format_map_csv(map, header));
}

}  // namespace sgcam
