#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

namespace bevloc::nn {

using Mat = Eigen::MatrixXd;

/// Precomputed bilinear gather for rotating an h x w grid about its center.
/// Entry o holds up to four source pixel indices (-1 = outside, reads as 0)
/// and their weights. Exact multiples of pi/2 degenerate to pure
/// permutations with unit weights, so those rotations are lossless.
struct RotateTable {
  int h = 0;
  int w = 0;
  double angle = 0.0;
  std::vector<std::array<int, 4>> idx;
  std::vector<std::array<double, 4>> wgt;
};

/// Rotation convention: rotating a point cloud by +yaw about +z moves image
/// content the same way rotate(img, +yaw) does, with row 0 at +y and col 0
/// at -x (the BEV raster convention). Source coordinates:
///   i_src = c + cos(a)*(i-c) + sin(a)*(j-c)
///   j_src = c - sin(a)*(i-c) + cos(a)*(j-c)
RotateTable make_rotate_table(int h, int w, double angle);

/// Applies a table to channel-major data [C, h*w]; out-of-bounds reads are 0.
Mat rotate_channels(const Mat& x, const RotateTable& t);

/// Scatter transpose of rotate_channels: accumulates dy through the table.
void rotate_channels_backward(const Mat& dy, const RotateTable& t, Mat& dx);

}  // namespace bevloc::nn
