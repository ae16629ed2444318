#pragma once

#include <vector>

#include <Eigen/Core>

namespace bevloc {

/// Planar rigid-body pose (x[m], y[m], yaw[rad]).
/// yaw is normalized to (-pi, pi] by every constructor and operation;
/// positive yaw is counter-clockwise about +z in a right-handed frame.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Pose2() = default;
  Pose2(double x_, double y_, double yaw_);

  static Pose2 identity() { return {}; }
};

/// 3D points in meters. Poses act on x/y only; z passes through unchanged.
using PointCloud = std::vector<Eigen::Vector3d>;

/// Wraps an angle to (-pi, pi]. Throws std::invalid_argument on non-finite input.
double wrap_angle(double theta);

/// SE(2) composition a * b (apply b in a's frame).
Pose2 compose(const Pose2& a, const Pose2& b);

/// Inverse pose, compose(p, inverse(p)) == identity.
Pose2 inverse(const Pose2& p);

/// Rotates each point by p.yaw about +z, then translates by (p.x, p.y).
PointCloud transform_cloud(const Pose2& p, const PointCloud& c);

/// True if every coordinate of every point is finite.
bool cloud_is_finite(const PointCloud& c);

}  // namespace bevloc
