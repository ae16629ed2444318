#include "bevloc/augment.hpp"

#include <stdexcept>

#include "bevloc/rng.hpp"

namespace bevloc {

void AugmentConfig::validate() const {
  if (frames_m < 1) throw std::invalid_argument("AugmentConfig: frames_m must be >= 1");
  if (interval_s < 1) throw std::invalid_argument("AugmentConfig: interval_s must be >= 1");
  if (offset_std < 0.0) throw std::invalid_argument("AugmentConfig: offset_std must be >= 0");
  if (apply_probability < 0.0 || apply_probability > 1.0) {
    throw std::invalid_argument("AugmentConfig: apply_probability must be in [0, 1]");
  }
  if (min_points < 0) throw std::invalid_argument("AugmentConfig: min_points must be >= 0");
}

PointCloud stitch_local_map(const std::vector<std::pair<PointCloud, Pose2>>& frames,
                            const Pose2& anchor, double leaf) {
  if (frames.empty()) throw std::invalid_argument("stitch_local_map: no frames");
  const Pose2 world_to_anchor = inverse(anchor);
  PointCloud merged;
  std::size_t total = 0;
  for (const auto& [cloud, pose] : frames) total += cloud.size();
  merged.reserve(total);
  for (const auto& [cloud, pose] : frames) {
    const Pose2 rel = compose(world_to_anchor, pose);
    PointCloud local = transform_cloud(rel, cloud);
    merged.insert(merged.end(), local.begin(), local.end());
  }
  return voxel_filter(merged, leaf);
}

Pose2 sample_virtual_pose(const Pose2& anchor, const AugmentConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const double dx = cfg.offset_std * rng.normal();
  const double dy = cfg.offset_std * rng.normal();
  const double yaw = wrap_angle(rng.uniform(0.0, 2.0 * M_PI));
  return Pose2(anchor.x + dx, anchor.y + dy, yaw);
}

std::optional<VirtualView> render_virtual_bev(const PointCloud& map, const Pose2& virtual_pose,
                                              const Pose2& anchor, const BevConfig& bev_cfg,
                                              int min_points) {
  PointCloud in_view;
  if (virtual_pose.x == anchor.x && virtual_pose.y == anchor.y &&
      virtual_pose.yaw == anchor.yaw) {
    in_view = map;  // identity view renders the map bit-exactly
  } else {
    in_view = transform_cloud(compose(inverse(virtual_pose), anchor), map);
  }
  RasterStats stats;
  BevImage img = rasterize(in_view, bev_cfg, &stats);
  if (stats.in_window < static_cast<std::size_t>(min_points)) return std::nullopt;
  img.frame_pose = virtual_pose;
  img.has_frame_pose = true;
  return VirtualView{std::move(img), virtual_pose};
}

}  // namespace bevloc
