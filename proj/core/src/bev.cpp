#include "bevloc/bev.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace bevloc {

int BevConfig::raster_side() const {
  return static_cast<int>(std::floor(2.0 * half_window / grid_resolution + 1e-9));
}

void BevConfig::validate() const {
  if (!(half_window > 0.0)) throw std::invalid_argument("BevConfig: half_window must be > 0");
  if (!(grid_resolution > 0.0)) throw std::invalid_argument("BevConfig: grid_resolution must be > 0");
  if (density_clamp < 1) throw std::invalid_argument("BevConfig: density_clamp must be >= 1");
  if (raster_side() < 8) throw std::invalid_argument("BevConfig: raster side must be >= 8");
  if (output_side < raster_side()) {
    throw std::invalid_argument("BevConfig: output_side smaller than raster side");
  }
  if (z_crop && !(z_min < z_max)) throw std::invalid_argument("BevConfig: empty z band");
}

namespace {

struct VoxelKey {
  std::int64_t ix, iy, iz;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::int64_t v : {k.ix, k.iy, k.iz}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct VoxelAccum {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  int count = 0;
};

}  // namespace

PointCloud voxel_filter(const PointCloud& c, double leaf) {
  if (!(leaf > 0.0)) throw std::invalid_argument("voxel_filter: leaf must be > 0");

  std::unordered_map<VoxelKey, VoxelAccum, VoxelKeyHash> voxels;
  voxels.reserve(c.size());
  for (const auto& p : c) {
    VoxelKey key{static_cast<std::int64_t>(std::floor(p.x() / leaf)),
                 static_cast<std::int64_t>(std::floor(p.y() / leaf)),
                 static_cast<std::int64_t>(std::floor(p.z() / leaf))};
    auto& acc = voxels[key];
    acc.sum += p;
    acc.count += 1;
  }

  std::vector<std::pair<VoxelKey, Eigen::Vector3d>> cells;
  cells.reserve(voxels.size());
  for (const auto& [key, acc] : voxels) {
    cells.emplace_back(key, acc.sum / acc.count);
  }
  std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
    const auto ta = std::tie(a.first.ix, a.first.iy, a.first.iz);
    const auto tb = std::tie(b.first.ix, b.first.iy, b.first.iz);
    return ta < tb;
  });

  PointCloud out;
  out.reserve(cells.size());
  for (const auto& [key, centroid] : cells) out.push_back(centroid);
  return out;
}

BevImage rasterize(const PointCloud& c, const BevConfig& cfg, RasterStats* stats) {
  cfg.validate();
  const double L = cfg.half_window;
  const double g = cfg.grid_resolution;
  const int side = cfg.raster_side();

  std::vector<int> counts(static_cast<std::size_t>(side) * side, 0);
  std::size_t in_window = 0, dropped = 0;

  for (const auto& p : c) {
    if (cfg.z_crop && (p.z() < cfg.z_min || p.z() > cfg.z_max)) {
      ++dropped;
      continue;
    }
    const double x = p.x(), y = p.y();
    if (x < -L || x >= L || y < -L || y >= L) {
      ++dropped;
      continue;
    }
    const int row = static_cast<int>(std::floor((L - y) / g));
    const int col = static_cast<int>(std::floor((x + L) / g));
    if (row < 0 || row >= side || col < 0 || col >= side) {
      ++dropped;  // only reachable on the exact window boundary
      continue;
    }
    ++counts[static_cast<std::size_t>(row) * side + col];
    ++in_window;
  }

  int n_m = 0;
  for (int n : counts) n_m = std::max(n_m, std::min(n, cfg.density_clamp));

  BevImage img;
  img.side = cfg.output_side;
  img.pixels = Eigen::MatrixXd::Zero(cfg.output_side, cfg.output_side);
  if (n_m > 0) {
    for (int r = 0; r < side; ++r) {
      for (int col = 0; col < side; ++col) {
        const int n = std::min(counts[static_cast<std::size_t>(r) * side + col], cfg.density_clamp);
        if (n > 0) img.pixels(r, col) = static_cast<double>(n) / n_m;
      }
    }
  }

  if (stats) {
    stats->in_window = in_window;
    stats->dropped = dropped;
    stats->max_clamped_count = n_m;
    stats->counts = std::move(counts);
  }
  return img;
}

BevImage make_bev(const PointCloud& c, const BevConfig& cfg, RasterStats* stats) {
  return rasterize(voxel_filter(c, cfg.grid_resolution), cfg, stats);
}

}  // namespace bevloc
