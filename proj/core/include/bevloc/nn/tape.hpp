#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "bevloc/nn/rotate.hpp"

namespace bevloc::nn {

/// Convolution geometry. Images travel through the tape as [C, H*W]
/// matrices (one row per channel, pixels row-major).
struct ConvSpec {
  int in_ch = 0, out_ch = 0;
  int kernel = 3, stride = 1, pad = 1;
  int in_h = 0, in_w = 0;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

/// Reverse-mode autodiff over 2D double matrices.
///
/// Nodes are created in topological order; backward() walks them in
/// reverse. With grad_enabled=false no closures are recorded and forward
/// values are the only allocation (inference mode). All operations are
/// deterministic and single-threaded; run one Tape per worker thread.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  int leaf(Mat v, bool needs_grad = false);
  const Mat& val(int id) const { return nodes_[id].v; }
  /// Valid after backward() for nodes that needed gradients.
  const Mat& grad(int id) const;

  /// Seeds d(root)/d(root) = 1 and accumulates gradients into every
  /// needs-grad node. root must be 1x1.
  void backward(int root);

  // -- elementwise ---------------------------------------------------------
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int a, double s);
  int gelu(int a);      // exact erf form
  int tanh(int a);
  int sigmoid(int a);
  int abs(int a);
  /// Elementwise max over several same-shape nodes; gradient follows the
  /// argmax (lowest index wins ties).
  int maximum(const std::vector<int>& xs);

  // -- broadcast -----------------------------------------------------------
  int add_row(int a, int row);   // [M,D] + [1,D]
  int mul_col(int a, int col);   // [M,D] * [M,1], broadcast across columns

  // -- linear algebra ------------------------------------------------------
  int matmul(int a, int b);
  int transpose(int a);

  // -- shape ---------------------------------------------------------------
  int concat_cols(const std::vector<int>& xs);
  int concat_rows(const std::vector<int>& xs);
  int slice_cols(int a, int c0, int n);
  int slice_rows(int a, int r0, int n);
  int reshape(int a, int rows, int cols);  // row-major reinterpretation

  // -- reductions / normalization ------------------------------------------
  int mean_all(int a);   // -> [1,1]
  int mean_rows(int a);  // [M,D] -> [1,D]
  int softmax_rows(int a);
  /// Per-row normalization of [M,D]; gamma/beta are [1,D].
  int layer_norm(int a, int gamma, int beta, double eps = 1e-5);
  /// Per-group normalization of [C,S]; gamma/beta are [C,1]. groups must
  /// divide C; statistics pool over (C/groups) rows x S columns.
  int group_norm(int a, int gamma, int beta, int groups, double eps = 1e-5);
  /// Group normalization whose statistics come only from the columns
  /// selected by mask (all pixels are still normalized and affine-mapped).
  /// Restricting statistics to a rotation-stable region keeps the layer
  /// commuting with spatial rotations despite zero-filled borders.
  int group_norm_masked(int a, int gamma, int beta, int groups,
                        const std::vector<std::uint8_t>& mask, double eps = 1e-5);

  // -- vision ---------------------------------------------------------------
  /// x [Cin, H*W], w [Cout, Cin*k*k], b [1, Cout] (b = -1 for no bias).
  /// im2col is recomputed in the backward pass instead of cached, trading
  /// a little compute for a much smaller live set.
  int conv2d(int x, int w, int b, const ConvSpec& spec);
  /// x [C, h*w]; table pre-built via make_rotate_table.
  int rotate(int x, const RotateTable& table);
  /// Separable binomial [1 2 1]/4 blur per axis, zero boundary. Used as a
  /// fixed anti-aliasing filter ahead of strided convolutions.
  int blur3(int x, int h, int w);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat v;
    Mat g;  // empty until first contribution
    bool needs_grad = false;
    std::function<void(Tape&)> back;  // null for leaves / inference
  };

  int push(Mat v, bool needs_grad, std::function<void(Tape&)> back);
  bool wants_grad(int a) const { return grad_enabled_ && nodes_[a].needs_grad; }
  void accum(int id, const Mat& g);
  Mat& g(int id) { return nodes_[id].g; }

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

/// Builds the im2col matrix [(Cin*k*k), out_h*out_w] for x = [Cin, H*W].
Mat im2col(const Mat& x, const ConvSpec& spec);

/// Binomial blur as a plain function (shared by the tape op).
Mat blur3_apply(const Mat& x, int h, int w);

/// 1 inside the centered disk of radius frac * side/2, 0 outside. The mask
/// maps onto itself under any rotation about the image center.
std::vector<std::uint8_t> disk_mask(int side, double frac);

}  // namespace bevloc::nn
