#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "bevloc/bev.hpp"
#include "bevloc/geometry.hpp"

namespace bevloc {

struct AugmentConfig {
  int frames_m = 5;        // M, clouds stitched per local map
  int interval_s = 20;     // S, frame spacing between stitched clouds
  double offset_std = 2.0; // tau [m], std of the virtual position offset
  double apply_probability = 0.5;
  int min_points = 50;     // in-window points below this reject the view

  void validate() const;
};

/// Transforms every cloud into the anchor's local frame, concatenates, and
/// voxel-filters at `leaf`. Throws std::invalid_argument on an empty list.
PointCloud stitch_local_map(const std::vector<std::pair<PointCloud, Pose2>>& frames,
                            const Pose2& anchor, double leaf);

/// New observation pose around the anchor: position offset ~ N(0, tau^2)
/// per axis, yaw uniform over (-pi, pi]. Deterministic per seed; the draw
/// order is dx, dy, yaw.
Pose2 sample_virtual_pose(const Pose2& anchor, const AugmentConfig& cfg, std::uint64_t seed);

struct VirtualView {
  BevImage image;
  Pose2 label;  // the virtual pose in the world frame
};

/// Renders the stitched map (anchor frame) from the virtual viewpoint.
/// Returns nullopt — the sparse-view rejection signal — when fewer than
/// min_points map points land in the window; the caller resamples.
std::optional<VirtualView> render_virtual_bev(const PointCloud& map, const Pose2& virtual_pose,
                                              const Pose2& anchor, const BevConfig& bev_cfg,
                                              int min_points = 50);

}  // namespace bevloc
