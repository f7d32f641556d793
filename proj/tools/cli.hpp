#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sgcam/saliency.hpp"

namespace sgcam::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Malformed flag values; maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flags of `explain`, already split into typed values.
struct CliConfig {
  std::string model_path;
  std::string weights_path;
  std::string image_path;
  std::string out_dir;
  Method method = Method::SmoothGradCamPP;
  std::optional<std::size_t> class_index;  // nullopt: auto
  std::string layer;                       // empty: last conv layer
  std::size_t samples = 25;
  double sigma = 0.15;
  std::optional<std::vector<std::size_t>> filters;
  std::optional<std::vector<Coord>> neurons;
  std::optional<Box> region_box;
  ActivationSource activation_source = ActivationSource::Original;
  ScoreKind score = ScoreKind::ExpLogit;
  std::uint64_t seed = 0;
  double blend = 0.5;

  friend bool operator==(const CliConfig&, const CliConfig&) = default;
};

std::vector<std::size_t> parse_filters(std::string_view text);
std::vector<Coord> parse_neurons(std::string_view text);
Box parse_box(std::string_view text);
std::string format_filters(const std::vector<std::size_t>& filters);
std::string format_neurons(const std::vector<Coord>& coords);
std::string format_box(const Box& box);

SaliencyRequest to_request(const CliConfig& config);

/// Space-separated key=value echo of every request flag, written as the
/// '#' header of map.csv. `chosen-class` and `class-score` are appended
/// when a result is available.
std::string format_meta_line(const CliConfig& config, const SaliencyMeta* result = nullptr);

/// Inverse of format_meta_line for the flag part (paths are not echoed).
CliConfig parse_meta_line(std::string_view line);

/// Entry point. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sgcam::cli
