#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace hloc {

// Rigid transform in SE(3): maps body-frame points into the parent frame as
// p' = rotation * p + translation.
struct Pose {
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();

  static Pose identity() { return {}; }
  static Pose from_xyz_yaw(double x, double y, double z, double yaw);

  Pose operator*(const Pose& rhs) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& point) const;
  Pose inverse() const;

  double yaw() const;
  bool operator==(const Pose& rhs) const;
};

inline constexpr double kQuaternionNormTolerance = 1e-9;

bool is_unit_quaternion(const Eigen::Quaterniond& q,
                        double tol = kQuaternionNormTolerance);
bool is_finite(const Pose& pose);

// Quaternion from intrinsic roll/pitch/yaw (z-y-x order).
Eigen::Quaterniond rpy_to_quaternion(double roll, double pitch, double yaw);

// Translation lerp and rotation slerp; alpha = 0 returns `a` exactly,
// alpha = 1 returns `b` exactly.
Pose interpolate(const Pose& a, const Pose& b, double alpha);

double wrap_angle(double angle);

}  // namespace hloc
