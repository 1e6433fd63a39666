#include "hloc/pose.hpp"

#include <cmath>
#include <numbers>

namespace hloc {

Pose Pose::from_xyz_yaw(double x, double y, double z, double yaw) {
  Pose p;
  p.translation = {x, y, z};
  p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()));
  return p;
}

Pose Pose::operator*(const Pose& rhs) const {
  Pose out;
  out.translation = translation + rotation * rhs.translation;
  out.rotation = (rotation * rhs.rotation).normalized();
  return out;
}

Eigen::Vector3d Pose::operator*(const Eigen::Vector3d& point) const {
  return rotation * point + translation;
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation = rotation.conjugate();
  out.translation = -(out.rotation * translation);
  return out;
}

double Pose::yaw() const {
  const Eigen::Vector3d x_axis = rotation * Eigen::Vector3d::UnitX();
  return std::atan2(x_axis.y(), x_axis.x());
}

bool Pose::operator==(const Pose& rhs) const {
  return translation == rhs.translation &&
         rotation.coeffs() == rhs.rotation.coeffs();
}

bool is_unit_quaternion(const Eigen::Quaterniond& q, double tol) {
  return std::abs(q.norm() - 1.0) <= tol;
}

bool is_finite(const Pose& pose) {
  return pose.translation.allFinite() && pose.rotation.coeffs().allFinite();
}

Eigen::Quaterniond rpy_to_quaternion(double roll, double pitch, double yaw) {
  return Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
                            Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
                            Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()));
}

Pose interpolate(const Pose& a, const Pose& b, double alpha) {
  if (alpha == 0.0) return a;
  if (alpha == 1.0) return b;
  Pose out;
  out.translation = (1.0 - alpha) * a.translation + alpha * b.translation;
  out.rotation = a.rotation.slerp(alpha, b.rotation).normalized();
  return out;
}

double wrap_angle(double angle) {
  return std::remainder(angle, 2.0 * std::numbers::pi);
}

}  // namespace hloc
