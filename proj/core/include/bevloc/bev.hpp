#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "bevloc/geometry.hpp"

namespace bevloc {

/// Raster window and density normalization settings.
///
/// The square window spans [-half_window, half_window) meters around the
/// sensor; the raster has floor(2L/g) cells per side and is zero-padded at
/// the bottom/right up to output_side so cell (0,0) keeps the index given
/// by the row/col formulas below.
struct BevConfig {
  double half_window = 25.0;   // L [m]
  double grid_resolution = 0.4;  // g [m]
  int density_clamp = 10;      // N_n, per-cell count saturation
  int output_side = 128;       // padded image side [px]

  // Optional z band filter; disabled by default.
  bool z_crop = false;
  double z_min = 0.0;
  double z_max = 0.0;

  /// floor(2L/g), with a tolerance for resolutions that are not exactly
  /// representable in binary (e.g. 50 / 0.4 must give 125).
  int raster_side() const;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
};

/// Single-channel normalized-density image. Pixel values lie in [0, 1];
/// any non-empty image attains exactly 1.0 at its densest cell.
struct BevImage {
  int side = 0;
  Eigen::MatrixXd pixels;  // side x side, row-major semantics pixels(row, col)
  Pose2 frame_pose;        // sensor pose this image was rendered from
  bool has_frame_pose = false;

  bool empty_image() const { return pixels.size() == 0 || pixels.maxCoeff() <= 0.0; }
};

/// Side products of rasterization, mostly for diagnostics and oracles.
struct RasterStats {
  std::size_t in_window = 0;   // points that landed in a raster cell
  std::size_t dropped = 0;     // outside the window (or the z band)
  int max_clamped_count = 0;   // N_m
  std::vector<int> counts;     // raw per-cell counts, raster_side^2 row-major
};

/// Keeps one point per occupied leaf^3 voxel, at the centroid of that
/// voxel's input points. Output is sorted by voxel index, so the result is
/// a pure function of the input set. Throws std::invalid_argument if
/// leaf <= 0.
PointCloud voxel_filter(const PointCloud& c, double leaf);

/// Projects a (voxel-filtered) cloud to the normalized-density image:
///   row = floor((L - y) / g), col = floor((x + L) / g)
///   pixel = min(N_g, N_n) / N_m,  N_m = max over cells of min(N_g, N_n)
/// Out-of-window points are dropped silently and reported via stats.
BevImage rasterize(const PointCloud& c, const BevConfig& cfg, RasterStats* stats = nullptr);

/// Voxel filter at leaf g followed by rasterize; the standard per-frame path.
BevImage make_bev(const PointCloud& c, const BevConfig& cfg, RasterStats* stats = nullptr);

}  // namespace bevloc
