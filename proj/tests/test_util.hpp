#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "bevloc/nn/layers.hpp"
#include "bevloc/rng.hpp"

namespace bevloc::testutil {

using nn::Mat;

inline Mat random_mat(Rng& rng, int rows, int cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
  }
  return m;
}

/// Builds the graph, runs backward, and compares every analytic parameter
/// gradient against central finite differences on up to `samples` randomly
/// chosen coordinates per tensor. Returns the worst normalized error
/// max |ga - gf| / max(1, |ga|, |gf|).
inline double check_param_grads(
    nn::ParamSet& ps,
    const std::function<int(nn::Tape&, nn::ParamBinding&)>& build,
    int samples_per_tensor = 6, double h = 1e-5, std::uint64_t seed = 1234) {
  auto eval = [&]() {
    nn::Tape t(false);
    nn::ParamBinding pb(t, ps, false);
    return t.val(build(t, pb))(0, 0);
  };

  std::vector<Mat> analytic;
  {
    nn::Tape t(true);
    nn::ParamBinding pb(t, ps, true);
    const int loss = build(t, pb);
    t.backward(loss);
    pb.export_grads(analytic, 1.0);
  }

  Rng rng(seed);
  double worst = 0.0;
  for (int p = 0; p < ps.size(); ++p) {
    Mat& v = ps.value(p);
    const int n = static_cast<int>(v.size());
    for (int s = 0; s < std::min(samples_per_tensor, n); ++s) {
      const int flat = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
      double* x = v.data() + flat;
      const double saved = *x;
      *x = saved + h;
      const double lp = eval();
      *x = saved - h;
      const double lm = eval();
      *x = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double ga = (p < static_cast<int>(analytic.size()) && analytic[p].size() != 0)
                            ? analytic[p](flat)
                            : 0.0;
      const double err = std::abs(ga - fd) / std::max({1.0, std::abs(ga), std::abs(fd)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace bevloc::testutil
