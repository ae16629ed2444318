#include "bevloc/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace bevloc {

double wrap_angle(double theta) {
  if (!std::isfinite(theta)) {
    throw std::invalid_argument("wrap_angle: non-finite angle");
  }
  // remainder() lands in [-pi, pi]; fold the open end onto +pi.
  double r = std::remainder(theta, 2.0 * M_PI);
  if (r <= -M_PI) r += 2.0 * M_PI;
  return r;
}

Pose2::Pose2(double x_, double y_, double yaw_) : x(x_), y(y_), yaw(wrap_angle(yaw_)) {}

Pose2 compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.yaw);
  const double s = std::sin(a.yaw);
  return Pose2(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.yaw + b.yaw);
}

Pose2 inverse(const Pose2& p) {
  const double c = std::cos(p.yaw);
  const double s = std::sin(p.yaw);
  return Pose2(-c * p.x - s * p.y, s * p.x - c * p.y, -p.yaw);
}

PointCloud transform_cloud(const Pose2& p, const PointCloud& c) {
  const double cy = std::cos(p.yaw);
  const double sy = std::sin(p.yaw);
  PointCloud out;
  out.reserve(c.size());
  for (const auto& pt : c) {
    out.emplace_back(cy * pt.x() - sy * pt.y() + p.x, sy * pt.x() + cy * pt.y() + p.y, pt.z());
  }
  return out;
}

bool cloud_is_finite(const PointCloud& c) {
  for (const auto& pt : c) {
    if (!pt.allFinite()) return false;
  }
  return true;
}

}  // namespace bevloc
