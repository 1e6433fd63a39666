#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hloc/mcl.hpp"
#include "hloc/pose.hpp"

namespace hloc::eval {

struct ErrorStats {
  double mean = 0.0;
  double rmse = 0.0;
  double median = 0.0;
  double max = 0.0;
};

ErrorStats summarize(std::span<const double> errors);

struct ApeSummary {
  std::string trial_id;
  std::vector<std::int64_t> step_ids;
  std::vector<double> t3d;  // per evaluated record, meters
  std::vector<double> t2d;
  ErrorStats t3d_stats;
  ErrorStats t2d_stats;
  std::size_t excluded = 0;  // records outside the ground-truth time range

  std::size_t n_steps() const { return t3d.size(); }
};

struct TranslationError {
  double t3d = 0.0;
  double t2d = 0.0;
};

// Translational part of estimate^-1 * truth: full norm and the norm of its
// first two components.
TranslationError pose_error(const Pose& estimate, const Pose& truth);

struct TimedPose {
  double timestamp;
  Pose pose;
};

// Ground-truth pose at `t`, interpolated (lerp/slerp) between the bracketing
// samples of a timestamp-sorted track. Returns nullopt outside the range.
std::optional<Pose> interpolate_track(std::span<const TimedPose> track, double t);

// Absolute pose error of every record. Records without their own ground
// truth are compared against the interpolated truth track; those outside the
// track's time range are excluded and counted.
ApeSummary ape(const mcl::TrajectoryLog& log);

// {trial_id, n_steps, excluded, t2d:{mean,rmse,median,max}, t3d:{...}}
std::string summary_json(const ApeSummary& summary, int indent = 2);
void write_summary_json(const ApeSummary& summary, const std::filesystem::path& path);

}  // namespace hloc::eval
