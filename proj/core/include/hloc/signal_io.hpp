#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hloc/pose.hpp"

namespace hloc {

inline constexpr int kSignalLength = 160;
inline constexpr int kSignalChannels = 6;

// Force/torque window captured at one touchdown: rows are time steps, columns
// are (Fx, Fy, Fz) in newtons followed by (Tx, Ty, Tz) in newton-meters.
struct HapticSignal {
  Eigen::MatrixXd samples;

  int rows() const { return static_cast<int>(samples.rows()); }
  int cols() const { return static_cast<int>(samples.cols()); }
  bool operator==(const HapticSignal& rhs) const {
    return samples.rows() == rhs.samples.rows() &&
           samples.cols() == rhs.samples.cols() && samples == rhs.samples;
  }
};

// Throws InvariantError unless `signal` is rows x cols with finite entries.
void validate_signal(const HapticSignal& signal, int rows = kSignalLength,
                     int cols = kSignalChannels);

struct StepEvent {
  std::int64_t step_id = 0;
  double timestamp = 0.0;
  int foot_id = 0;
  HapticSignal signal;
  // Foothold in the base frame at touchdown.
  Eigen::Vector3d foothold_base = Eigen::Vector3d::Zero();
  Pose odom_pose;
  std::optional<Pose> truth_pose;
  // Foothold in the world frame; required whenever truth_pose is set.
  std::optional<Eigen::Vector3d> foothold_world_truth;

  bool operator==(const StepEvent& rhs) const;
};

struct Trial {
  std::string trial_id;
  std::vector<StepEvent> events;
  std::map<std::string, std::string> metadata;

  bool operator==(const Trial& rhs) const = default;
};

// Checks every StepEvent and Trial invariant; throws InvariantError naming the
// offending step_id.
void validate_trial(const Trial& trial);

// JSON Lines: a header record followed by one record per step event.
Trial read_trial(const std::filesystem::path& path);
void write_trial(const Trial& trial, const std::filesystem::path& path);

// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace hloc
