#include "bevloc/normalizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bevloc {

PoseNormalizer PoseNormalizer::fit(std::span<const Pose2> poses, double margin) {
  if (poses.empty()) throw std::invalid_argument("PoseNormalizer::fit: no poses");
  PoseNormalizer n;
  n.x_lo = n.x_hi = poses[0].x;
  n.y_lo = n.y_hi = poses[0].y;
  for (const Pose2& p : poses) {
    n.x_lo = std::min(n.x_lo, p.x);
    n.x_hi = std::max(n.x_hi, p.x);
    n.y_lo = std::min(n.y_lo, p.y);
    n.y_hi = std::max(n.y_hi, p.y);
  }
  auto expand = [margin](double& lo, double& hi) {
    const double range = std::max(hi - lo, 1.0);
    lo -= margin * range;
    hi += margin * range;
  };
  expand(n.x_lo, n.x_hi);
  expand(n.y_lo, n.y_hi);
  return n;
}

Eigen::Vector4d PoseNormalizer::encode(const Pose2& p) const {
  return {2.0 * (p.x - x_lo) / (x_hi - x_lo) - 1.0,
          2.0 * (p.y - y_lo) / (y_hi - y_lo) - 1.0,
          std::cos(p.yaw), std::sin(p.yaw)};
}

Pose2 PoseNormalizer::decode(const Eigen::Vector4d& v) const {
  return Pose2(x_lo + 0.5 * (v(0) + 1.0) * (x_hi - x_lo),
               y_lo + 0.5 * (v(1) + 1.0) * (y_hi - y_lo),
               std::atan2(v(3), v(2)));
}

}  // namespace bevloc
