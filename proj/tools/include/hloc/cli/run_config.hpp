#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hloc/error.hpp"
#include "hloc/mcl.hpp"
#include "hloc/net.hpp"
#include "hloc/synth.hpp"
#include "hloc/train.hpp"

namespace hloc::cli {

// Bad command-line usage (unknown variant, empty size list, ...).
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("usage", what) {}
};

// Every tunable of the pipeline in one place. Module seeds are not set
// directly: each stage derives its own from `seed`.
struct RunConfig {
  std::uint64_t seed = 0;

  synth::WorldConfig world;
  synth::OdometryNoiseConfig odometry;
  int gen_trials = 3;
  int gen_waypoints = 10;
  double gen_waypoint_margin = 0.5;
  double gen_lane_spacing = 0.3;
  double gen_lane_margin = 0.3;

  net::NetConfig net;
  train::TrainConfig train;

  mcl::MclConfig mcl;
  mcl::MeasurementModelConfig measurement;

  std::vector<int> sweep_sizes = {2, 4, 8, 16, 32, 64, 128, 256};
  int sweep_epochs = 200;
  std::string sweep_variant = "hl-st";

  int bench_samples = 10000;
  int bench_warmup = 200;

  // Throws ConfigError when any constituent constraint fails.
  void validate() const;

  synth::WorldConfig world_config() const;
  net::NetConfig net_config() const;
  train::TrainConfig train_config() const;
  mcl::MclConfig mcl_config() const;
  std::uint64_t stage_seed(std::string_view stage) const;
};

// Sets one key from its text form; throws ConfigError on an unknown key or
// a malformed value.
void set_value(RunConfig& config, std::string_view key, std::string_view value);

// Applies a `key = value` file: one assignment per line, `#` starts a
// comment, blank lines are ignored.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

// Applies `key=value` overrides in order.
void apply_overrides(RunConfig& config, const std::vector<std::string>& assignments);

struct ConfigEntry {
  std::string key;
  std::string value;
};

// Every key with its current value, in documentation order.
std::vector<ConfigEntry> describe(const RunConfig& config);

// Comma-separated list of positive integers.
std::vector<int> parse_sizes(std::string_view text);

// "hl-t" -> false, "hl-st" -> true; anything else is a UsageError.
bool variant_uses_elevation(std::string_view variant);

}  // namespace hloc::cli
