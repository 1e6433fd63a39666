#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hloc/rng.hpp"
#include "hloc/signal_io.hpp"

namespace hloc::synth {

struct WorldConfig {
  double width = 3.5;   // meters, x extent
  double height = 7.0;  // meters, y extent
  int n_regions = 8;
  double elevation_amplitude = 0.03;     // meters, smooth surface stddev
  double elevation_length_scale = 0.6;   // meters
  double region_height_step = 0.02;      // meters, max per-region offset
  double modulation_scale = 0.3;         // relative amplitude modulation
  double modulation_length_scale = 0.3;  // meters
  double signal_noise = 0.05;            // white noise, fraction of channel scale
  double step_length = 0.1;              // base travel per step event, meters
  double step_period = 0.6;              // seconds between step events
  double base_height = 0.45;             // meters above terrain
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const WorldConfig&) const = default;
};

struct OdometryNoiseConfig {
  double translation_drift_per_meter = 0.02;  // horizontal, world frame
  double vertical_drift_per_meter = 0.01;
  double yaw_drift_per_radian = 0.02;
  double translation_noise = 0.002;  // per-step white noise stddev, meters
  double yaw_noise = 0.001;          // per-step white noise stddev, radians

  void validate() const;
};

// Stationary random field with unit variance and squared-exponential
// correlation exp(-r^2 / (2 l^2)), approximated by random Fourier features.
class SmoothField {
 public:
  SmoothField() = default;
  SmoothField(double length_scale, int n_features, Rng& rng);
  double operator()(const Eigen::Vector2d& p) const;

 private:
  std::vector<Eigen::Vector2d> frequencies_;
  std::vector<double> phases_;
};

inline constexpr int kComponentsPerChannel = 3;

// Damped sinusoids per channel plus a stance offset.
struct RegionSignature {
  std::array<double, kSignalChannels> offset{};
  std::array<std::array<double, kComponentsPerChannel>, kSignalChannels> amplitude{};
  std::array<std::array<double, kComponentsPerChannel>, kSignalChannels> frequency{};
  std::array<std::array<double, kComponentsPerChannel>, kSignalChannels> damping{};
  std::array<std::array<double, kComponentsPerChannel>, kSignalChannels> phase{};
  double height_offset = 0.0;
};

class World {
 public:
  explicit World(const WorldConfig& config);

  const WorldConfig& config() const { return config_; }
  int region_at(const Eigen::Vector2d& p) const;
  double elevation(const Eigen::Vector2d& p) const;
  bool contains(const Eigen::Vector2d& p) const;

  // Deterministic part of the haptic signature at a foothold.
  HapticSignal signature(const Eigen::Vector2d& p) const;
  // Region base waveform without location modulation.
  HapticSignal base_signature(int region) const;
  // signature(p) plus white noise.
  HapticSignal sample_signal(const Eigen::Vector2d& p, Rng& rng) const;

  const std::vector<Eigen::Vector2d>& region_centers() const { return centers_; }

 private:
  HapticSignal render(int region, const Eigen::Vector2d* p) const;

  WorldConfig config_;
  std::vector<Eigen::Vector2d> centers_;
  std::vector<RegionSignature> regions_;
  SmoothField elevation_field_;
  std::array<SmoothField, kSignalChannels> offset_fields_;
  std::array<std::array<SmoothField, kComponentsPerChannel>, kSignalChannels> amplitude_fields_;
};

World generate_world(const WorldConfig& config);

using Route = std::vector<Eigen::Vector2d>;

// Back-and-forth lanes along y covering the arena.
Route lawnmower_route(const WorldConfig& config, double lane_spacing = 0.3,
                      double margin = 0.3);
// Uniform random waypoints inside the arena shrunk by `margin`.
Route random_waypoint_route(const WorldConfig& config, int n_waypoints, double margin,
                            Rng& rng);
double route_length(const Route& route);

// Lays step events along the route every step_length meters, cycling the four
// feet. Truth poses and footholds are exact; odometry accumulates drift and
// white noise from the first truth pose.
Trial simulate_trial(const World& world, const Route& route, const OdometryNoiseConfig& odom,
                     std::uint64_t seed, const std::string& trial_id);

// Nominal foot positions in the base frame (x forward, y left).
const std::array<Eigen::Vector2d, 4>& foot_offsets();

// .world.json: the generating config; the world is rebuilt from it.
void save_world(const World& world, const std::filesystem::path& path);
World load_world(const std::filesystem::path& path);

}  // namespace hloc::synth
