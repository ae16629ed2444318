#include "bevloc/nn/rotate.hpp"

#include <cmath>
#include <stdexcept>

namespace bevloc::nn {

RotateTable make_rotate_table(int h, int w, double angle) {
  if (h != w) throw std::invalid_argument("make_rotate_table: spatial dims must be square");
  RotateTable t;
  t.h = h;
  t.w = w;
  t.angle = angle;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  t.idx.resize(n);
  t.wgt.resize(n);
  const double c = (h - 1) / 2.0;
  double ca = std::cos(angle);
  double sa = std::sin(angle);
  // Snap the quarter-turn angles so they become exact permutations instead
  // of picking up ~1e-16 interpolation residue from cos/sin rounding.
  if (std::abs(ca) < 1e-12) ca = 0.0;
  if (std::abs(sa) < 1e-12) sa = 0.0;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double di = i - c;
      const double dj = j - c;
      const double si = c + ca * di + sa * dj;
      const double sj = c - sa * di + ca * dj;
      const std::size_t o = static_cast<std::size_t>(i) * w + j;
      auto& idx = t.idx[o];
      auto& wgt = t.wgt[o];
      idx = {-1, -1, -1, -1};
      wgt = {0.0, 0.0, 0.0, 0.0};
      const double fi = std::floor(si);
      const double fj = std::floor(sj);
      const double ri = si - fi;
      const double rj = sj - fj;
      const int i0 = static_cast<int>(fi);
      const int j0 = static_cast<int>(fj);
      const double w00 = (1.0 - ri) * (1.0 - rj);
      const double w01 = (1.0 - ri) * rj;
      const double w10 = ri * (1.0 - rj);
      const double w11 = ri * rj;
      auto put = [&](int slot, int ii, int jj, double weight) {
        if (weight == 0.0) return;
        if (ii < 0 || ii >= h || jj < 0 || jj >= w) return;  // zero fill
        idx[slot] = ii * w + jj;
        wgt[slot] = weight;
      };
      put(0, i0, j0, w00);
      put(1, i0, j0 + 1, w01);
      put(2, i0 + 1, j0, w10);
      put(3, i0 + 1, j0 + 1, w11);
    }
  }
  return t;
}

Mat rotate_channels(const Mat& x, const RotateTable& t) {
  const std::size_t n = static_cast<std::size_t>(t.h) * t.w;
  if (x.cols() != static_cast<Eigen::Index>(n)) {
    throw std::invalid_argument("rotate_channels: pixel count disagrees with table");
  }
  Mat y = Mat::Zero(x.rows(), x.cols());
  for (std::size_t o = 0; o < n; ++o) {
    auto col = y.col(static_cast<Eigen::Index>(o));
    for (int s = 0; s < 4; ++s) {
      const int src = t.idx[o][s];
      if (src >= 0) col += t.wgt[o][s] * x.col(src);
    }
  }
  return y;
}

void rotate_channels_backward(const Mat& dy, const RotateTable& t, Mat& dx) {
  const std::size_t n = static_cast<std::size_t>(t.h) * t.w;
  for (std::size_t o = 0; o < n; ++o) {
    auto col = dy.col(static_cast<Eigen::Index>(o));
    for (int s = 0; s < 4; ++s) {
      const int src = t.idx[o][s];
      if (src >= 0) dx.col(src) += t.wgt[o][s] * col;
    }
  }
}

}  // namespace bevloc::nn
