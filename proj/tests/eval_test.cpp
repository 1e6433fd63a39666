#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "hloc/eval.hpp"
#include "hloc/mcl.hpp"
#include "json.hpp"
#include "oracles.hpp"

namespace hloc {
namespace {

mcl::TrajectoryLog make_log(const std::vector<Pose>& estimates, const std::vector<Pose>& truths) {
  mcl::TrajectoryLog log;
  log.trial_id = "t";
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    log.records.push_back({static_cast<double>(i), static_cast<std::int64_t>(i), estimates[i],
                           truths[i], 1.0});
  }
  return log;
}

TEST(PoseError, Examples) {
  std::mt19937_64 rng(1);
  const Pose g = testing::random_pose(rng);
  EXPECT_EQ(eval::pose_error(g, g).t3d, 0.0);

  Pose offset;
  offset.translation = {0, 0, 0.5};
  const auto e = eval::pose_error(offset, Pose{});
  EXPECT_DOUBLE_EQ(e.t3d, 0.5);
  EXPECT_DOUBLE_EQ(e.t2d, 0.0);

  // Rotation-only error: P = G * R shares G's origin, so T = R^-1 has no translation.
  Pose rot;
  rot.rotation = rpy_to_quaternion(0.3, -0.2, 1.1);
  const auto r = eval::pose_error(g * rot, g);
  EXPECT_LE(r.t3d, 1e-12);
}

TEST(PoseError, LeftInvarianceAndOrdering) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Pose p = testing::random_pose(rng);
    const Pose g = testing::random_pose(rng);
    const Pose w = testing::random_pose(rng);
    const auto a = eval::pose_error(p, g);
    const auto b = eval::pose_error(w * p, w * g);
    EXPECT_NEAR(a.t3d, b.t3d, 1e-12);
    EXPECT_GE(a.t3d, 0.0);
    EXPECT_LE(a.t2d, a.t3d);
  }
}

TEST(Ape, PerfectLogGivesZeros) {
  std::mt19937_64 rng(3);
  std::vector<Pose> poses;
  for (int i = 0; i < 10; ++i) poses.push_back(testing::random_pose(rng));
  const auto s = eval::ape(make_log(poses, poses));
  EXPECT_EQ(s.n_steps(), 10u);
  EXPECT_EQ(s.t3d_stats.max, 0.0);
  EXPECT_EQ(s.t2d_stats.mean, 0.0);
}

TEST(Ape, InterpolatesMissingTruthAndExcludesOutOfRange) {
  mcl::TrajectoryLog log;
  log.trial_id = "interp";
  log.records.push_back({0.0, 0, Pose{}, std::nullopt, 1.0});  // before the track
  log.records.push_back({1.0, 1, Pose{}, Pose::from_xyz_yaw(1, 0, 0, 0), 1.0});
  log.records.push_back({2.0, 2, Pose{}, std::nullopt, 1.0});
  log.records.push_back({3.0, 3, Pose{}, Pose::from_xyz_yaw(3, 0, 0, 0), 1.0});
  log.records.push_back({4.0, 4, Pose{}, std::nullopt, 1.0});  // after the track
  const auto s = eval::ape(log);
  EXPECT_EQ(s.excluded, 2u);
  ASSERT_EQ(s.n_steps(), 3u);
  EXPECT_EQ(s.step_ids, (std::vector<std::int64_t>{1, 2, 3}));
  EXPECT_NEAR(s.t2d[1], 2.0, 1e-12);
}

TEST(InterpolateTrack, ExactAtStoredTimestamps) {
  std::mt19937_64 rng(4);
  std::vector<eval::TimedPose> track;
  for (int i = 0; i < 5; ++i) track.push_back({0.3 * i, testing::random_pose(rng)});
  for (const auto& tp : track) {
    EXPECT_TRUE(*eval::interpolate_track(track, tp.timestamp) == tp.pose);
  }
  EXPECT_FALSE(eval::interpolate_track(track, -0.1).has_value());
  EXPECT_FALSE(eval::interpolate_track(track, 1.3).has_value());
  const Pose mid = *eval::interpolate_track(track, 0.45);
  EXPECT_LE((mid.translation - 0.5 * (track[1].pose.translation + track[2].pose.translation))
                .norm(),
            1e-12);
}

TEST(Summarize, Statistics) {
  const std::vector<double> e = {3.0, 1.0, 4.0, 2.0};
  const auto s = eval::summarize(e);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.median, 2.5);
  EXPECT_DOUBLE_EQ(s.max, 4.0);
  EXPECT_DOUBLE_EQ(s.rmse, std::sqrt(30.0 / 4));
  const std::vector<double> odd = {5.0, 1.0, 3.0};
  EXPECT_DOUBLE_EQ(eval::summarize(odd).median, 3.0);
}

TEST(SummaryJson, FieldsComplete) {
  const std::vector<Pose> est = {Pose::from_xyz_yaw(0, 0, 0.5, 0), Pose{}};
  const std::vector<Pose> truth = {Pose{}, Pose{}};
  const auto s = eval::ape(make_log(est, truth));
  const auto path = std::filesystem::temp_directory_path() / "hloc_eval_test_summary.json";
  eval::write_summary_json(s, path);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("trial_id"), "t");
  EXPECT_EQ(j.at("n_steps"), 2);
  EXPECT_EQ(j.at("excluded"), 0);
  for (const char* key : {"t2d", "t3d"}) {
    for (const char* stat : {"mean", "rmse", "median", "max"}) {
      EXPECT_TRUE(j.at(key).contains(stat)) << key << "." << stat;
    }
  }
  EXPECT_DOUBLE_EQ(j["t3d"]["mean"].get<double>(), 0.25);
  EXPECT_DOUBLE_EQ(j["t2d"]["max"].get<double>(), 0.0);
}

}  // namespace
}  // namespace hloc
