#pragma once

#include <cstdint>
#include <vector>

#include "bevloc/geometry.hpp"

namespace bevloc {

/// Extruded convex polygon: footprint in the ground plane plus a z range.
struct Obstacle {
  std::vector<Eigen::Vector2d> polygon;  // convex, counter-clockwise
  double z_lo = 0.0;
  double z_hi = 0.0;

  double area() const;
  bool contains(const Eigen::Vector2d& p) const;
};

struct WorldParams {
  double extent = 100.0;    // world is the square [-extent/2, extent/2]^2
  double block_fill = 0.85; // probability a candidate building site is used
  double pole_fill = 0.5;   // probability a candidate pole site is used
  double pole_spacing = 6.0;
};

/// Street-like 2.5D environment: a guaranteed free ring corridor with
/// buildings inside and outside it and poles scattered along its edges.
struct WorldModel {
  double extent = 100.0;
  std::uint64_t seed = 0;
  WorldParams params;
  std::vector<Obstacle> obstacles;
  double corridor_outer = 0.0;  // half-size of the corridor's outer square
  double corridor_inner = 0.0;  // half-size of the corridor's inner square

  bool in_collision(const Eigen::Vector2d& p) const;
};

/// Deterministic per seed. Throws std::invalid_argument when params cannot
/// produce >= 20% free corridor space (e.g. extent < 20).
WorldModel generate_world(std::uint64_t seed, const WorldParams& params = {});

struct ScanConfig {
  int beams = 360;
  int rings = 8;
  std::vector<double> ring_heights = {0.3, 0.9, 1.5, 2.1, 2.7, 3.3, 4.1, 5.0};  // world z
  double max_range = 60.0;
  double range_noise_std = 0.02;
  double dropout_prob = 0.01;

  void validate() const;
};

/// Casts beams x rings rays from the sensor; a ring hits obstacles whose z
/// range contains its height. Points come back in the sensor frame with
/// z = ring height. Throws std::runtime_error("pose in collision") when the
/// sensor is inside an obstacle footprint.
PointCloud simulate_scan(const WorldModel& world, const Pose2& pose, const ScanConfig& cfg,
                         std::uint64_t seed);

/// Smooth, collision-free loop trajectory along the corridor; consecutive
/// yaw change stays below 0.2 rad. Deterministic per seed (the seed also
/// picks travel direction and start offset).
std::vector<Pose2> generate_trajectory(const WorldModel& world, int length, double speed,
                                       std::uint64_t seed);

struct FrameRecord {
  std::int64_t frame_id = 0;
  double timestamp = 0.0;
  PointCloud cloud;  // sensor frame
  Pose2 pose;        // ground truth, world frame
};

}  // namespace bevloc
