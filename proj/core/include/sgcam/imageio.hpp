#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sgcam/tensor.hpp"

namespace sgcam {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit RGB raster, row-major, three bytes per pixel.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::size_t width, std::size_t height, Rgb fill = {0, 0, 0});

  Rgb at(std::size_t row, std::size_t col) const;
  void set(std::size_t row, std::size_t col, Rgb value);

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Binary PPM (P6, maxval 255). Header tokens may be separated by any
/// whitespace and '#' comments run to end of line.
RgbImage parse_ppm(std::string_view bytes);
std::string encode_ppm(const RgbImage& img);
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RgbImage& img, const std::filesystem::path& path);

/// [C,H,W] tensor in [0,1]. C=3 keeps RGB; C=1 takes luma
/// 0.299 R + 0.587 G + 0.114 B. No resizing: sizes must match.
Tensor to_input_tensor(const RgbImage& img, const Shape& model_input);

/// Inverse of to_input_tensor for C=1 or C=3 tensors in [0,1].
RgbImage from_input_tensor(const Tensor& input);

/// Jet-style ramp, fixed so renders are byte-exact:
///   R = clamp(1.5 - |4v - 3|), G = clamp(1.5 - |4v - 2|), B = clamp(1.5 - |4v - 1|)
/// scaled by 255 and rounded half away from zero. v is clamped to [0,1].
Rgb colormap(double v);

RgbImage render_heatmap(const Tensor& heat);

/// round((1 - blend) * base + blend * colormap(heat)) per channel.
RgbImage overlay(const RgbImage& base, const Tensor& heat, double blend = 0.5);

/// One line per map row, comma separated, 9 significant digits. A
/// non-empty `header` is written first as a '#' comment line.
std::string format_map_csv(const Tensor& map, std::string_view header = {});
void write_map_csv(const Tensor& map, const std::filesystem::path& path, std::string_view header = {});

}  // namespace sgcam
