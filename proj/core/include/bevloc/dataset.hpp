#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bevloc/synthworld.hpp"

namespace bevloc {

/// On-disk layout (bit-exact for a given seed triple):
///   world.json            world params + seeds + speed
///   poses.csv             header frame_id,timestamp,x,y,yaw (9 sig. digits)
///   clouds/NNNNNN.bin     little-endian float32 (x,y,z) triplets
///   meta.json             format version, counts, scan config
struct Dataset {
  WorldModel world;
  ScanConfig scan;
  std::vector<FrameRecord> frames;
  std::uint64_t world_seed = 0;
  std::uint64_t trajectory_seed = 0;
  std::uint64_t scan_seed = 0;
  double speed = 0.5;  // m/frame
};

/// World + trajectory + scans, a pure function of the three seeds.
Dataset generate_dataset(std::uint64_t world_seed, std::uint64_t trajectory_seed,
                         std::uint64_t scan_seed, const WorldParams& world_params,
                         const ScanConfig& scan_cfg, int frame_count, double speed);

void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

void save_cloud_bin(const std::filesystem::path& path, const PointCloud& c);
PointCloud load_cloud_bin(const std::filesystem::path& path);

}  // namespace bevloc
