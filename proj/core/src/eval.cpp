#include "hloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "hloc/error.hpp"

namespace hloc::eval {

ErrorStats summarize(std::span<const double> errors) {
  ErrorStats s;
  if (errors.empty()) return s;
  double sum = 0.0, sum_sq = 0.0;
  for (double e : errors) {
    sum += e;
    sum_sq += e * e;
    s.max = std::max(s.max, e);
  }
  const double n = static_cast<double>(errors.size());
  s.mean = sum / n;
  s.rmse = std::sqrt(sum_sq / n);
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  s.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return s;
}

TranslationError pose_error(const Pose& estimate, const Pose& truth) {
  const Eigen::Vector3d t = (estimate.inverse() * truth).translation;
  return {t.norm(), t.head<2>().norm()};
}

std::optional<Pose> interpolate_track(std::span<const TimedPose> track, double t) {
  if (track.empty() || t < track.front().timestamp || t > track.back().timestamp) {
    return std::nullopt;
  }
  const auto upper = std::lower_bound(
      track.begin(), track.end(), t,
      [](const TimedPose& p, double value) { return p.timestamp < value; });
  if (upper->timestamp == t) return upper->pose;
  const auto lower = upper - 1;
  const double alpha = (t - lower->timestamp) / (upper->timestamp - lower->timestamp);
  return interpolate(lower->pose, upper->pose, alpha);
}

ApeSummary ape(const mcl::TrajectoryLog& log) {
  std::vector<TimedPose> track;
  for (const mcl::TrajectoryRecord& r : log.records) {
    if (r.truth) track.push_back({r.timestamp, *r.truth});
  }
  std::stable_sort(track.begin(), track.end(), [](const TimedPose& a, const TimedPose& b) {
    return a.timestamp < b.timestamp;
  });

  ApeSummary s;
  s.trial_id = log.trial_id;
  for (const mcl::TrajectoryRecord& r : log.records) {
    const std::optional<Pose> truth = r.truth ? r.truth : interpolate_track(track, r.timestamp);
    if (!truth) {
      ++s.excluded;
      continue;
    }
    const TranslationError err = pose_error(r.estimate, *truth);
    s.step_ids.push_back(r.step_id);
    s.t3d.push_back(err.t3d);
    s.t2d.push_back(err.t2d);
  }
  s.t3d_stats = summarize(s.t3d);
  s.t2d_stats = summarize(s.t2d);
  return s;
}

namespace {

nlohmann::ordered_json stats_json(const ErrorStats& s) {
  return {{"mean", s.mean}, {"rmse", s.rmse}, {"median", s.median}, {"max", s.max}};
}

}  // namespace

std::string summary_json(const ApeSummary& summary, int indent) {
  nlohmann::ordered_json j;
  j["trial_id"] = summary.trial_id;
  j["n_steps"] = summary.n_steps();
  j["excluded"] = summary.excluded;
  j["t2d"] = stats_json(summary.t2d_stats);
  j["t3d"] = stats_json(summary.t3d_stats);
  return j.dump(indent);
}

void write_summary_json(const ApeSummary& summary, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << summary_json(summary) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace hloc::eval
