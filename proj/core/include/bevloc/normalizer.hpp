#pragma once

#include <span>

#include <Eigen/Core>

#include "bevloc/geometry.hpp"

namespace bevloc {

/// Affine map between world positions and the [-1, 1] box the diffusion
/// head operates in. The encoded vector is (x_n, y_n, cos yaw, sin yaw),
/// which keeps the noise-regression target free of the +-pi wrap.
struct PoseNormalizer {
  double x_lo = -1.0, x_hi = 1.0;
  double y_lo = -1.0, y_hi = 1.0;

  /// Bounding box of the given poses expanded by margin (fraction of range)
  /// on each side. Degenerate ranges are widened to at least 1 m.
  static PoseNormalizer fit(std::span<const Pose2> poses, double margin = 0.05);

  Eigen::Vector4d encode(const Pose2& p) const;

  /// decode tolerates non-unit (cos, sin) pairs; yaw = atan2(sin, cos).
  Pose2 decode(const Eigen::Vector4d& v) const;
};

}  // namespace bevloc
