#include "bevloc/nn/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace bevloc::nn {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

int Tape::push(Mat v, bool needs_grad, std::function<void(Tape&)> back) {
  Node n;
  n.v = std::move(v);
  n.needs_grad = grad_enabled_ && needs_grad;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Mat v, bool needs_grad) { return push(std::move(v), needs_grad, nullptr); }

const Mat& Tape::grad(int id) const {
  const Node& n = nodes_[id];
  if (n.g.size() == 0) {
    throw std::logic_error("Tape::grad: no gradient accumulated for node");
  }
  return n.g;
}

void Tape::accum(int id, const Mat& g_in) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.g.size() == 0) {
    n.g = g_in;
  } else {
    n.g += g_in;
  }
}

void Tape::backward(int root) {
  if (!grad_enabled_) throw std::logic_error("Tape::backward on inference tape");
  if (nodes_[root].v.rows() != 1 || nodes_[root].v.cols() != 1) {
    throw std::invalid_argument("Tape::backward: root must be 1x1");
  }
  nodes_[root].g = Mat::Ones(1, 1);
  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.back && n.g.size() != 0) n.back(*this);
  }
}

// ---------------------------------------------------------------------------
// elementwise

int Tape::add(int a, int b) {
  Mat y = nodes_[a].v + nodes_[b].v;
  const bool ng = wants_grad(a) || wants_grad(b);
  return push(std::move(y), ng, [a, b, out = static_cast<int>(nodes_.size())](Tape& t) {
    t.accum(a, t.nodes_[out].g);
    t.accum(b, t.nodes_[out].g);
  });
}

int Tape::sub(int a, int b) {
  Mat y = nodes_[a].v - nodes_[b].v;
  const bool ng = wants_grad(a) || wants_grad(b);
  return push(std::move(y), ng, [a, b, out = static_cast<int>(nodes_.size())](Tape& t) {
    t.accum(a, t.nodes_[out].g);
    t.accum(b, -t.nodes_[out].g);
  });
}

int Tape::mul(int a, int b) {
  Mat y = nodes_[a].v.cwiseProduct(nodes_[b].v);
  const bool ng = wants_grad(a) || wants_grad(b);
  return push(std::move(y), ng, [a, b, out = static_cast<int>(nodes_.size())](Tape& t) {
    const Mat& g = t.nodes_[out].g;
    t.accum(a, g.cwiseProduct(t.nodes_[b].v));
    t.accum(b, g.cwiseProduct(t.nodes_[a].v));
  });
}

int Tape::scale(int a, double s) {
  Mat y = nodes_[a].v * s;
  return push(std::move(y), wants_grad(a), [a, s, out = static_cast<int>(nodes_.size())](Tape& t) {
    t.accum(a, Mat(t.nodes_[out].g * s));
  });
}

int Tape::gelu(int a) {
  Mat y = nodes_[a].v.unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  return push(std::move(y), wants_grad(a), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
    const Mat d = t.nodes_[a].v.unaryExpr([](double x) {
      return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * std::exp(-0.5 * x * x) * kInvSqrt2Pi;
    });
    t.accum(a, t.nodes_[out].g.cwiseProduct(d));
  });
}

int Tape::tanh(int a) {
  Mat y = nodes_[a].v.array().tanh();
  return push(std::move(y), wants_grad(a), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
    const auto& y = t.nodes_[out].v.array();
    t.accum(a, Mat(t.nodes_[out].g.array() * (1.0 - y * y)));
  });
}

int Tape::sigmoid(int a) {
  Mat y = (1.0 + (-nodes_[a].v.array()).exp()).inverse();
  return push(std::move(y), wants_grad(a), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
    const auto& y = t.nodes_[out].v.array();
    t.accum(a, Mat(t.nodes_[out].g.array() * y * (1.0 - y)));
  });
}

int Tape::abs(int a) {
  Mat y = nodes_[a].v.cwiseAbs();
  return push(std::move(y), wants_grad(a), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
    const auto& x = t.nodes_[a].v.array();
    Mat sign = (x >= 0.0).select(Mat::Ones(x.rows(), x.cols()), Mat::Constant(x.rows(), x.cols(), -1.0));
    t.accum(a, t.nodes_[out].g.cwiseProduct(sign));
  });
}

int Tape::maximum(const std::vector<int>& xs) {
  if (xs.empty()) throw std::invalid_argument("Tape::maximum: empty input list");
  Mat y = nodes_[xs[0]].v;
  Eigen::MatrixXi arg = Eigen::MatrixXi::Zero(y.rows(), y.cols());
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const Mat& xi = nodes_[xs[i]].v;
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        if (xi(r, c) > y(r, c)) {
          y(r, c) = xi(r, c);
          arg(r, c) = static_cast<int>(i);
        }
      }
    }
  }
  bool ng = false;
  for (int x : xs) ng = ng || wants_grad(x);
  return push(std::move(y), ng,
              [xs, arg = std::move(arg), out = static_cast<int>(nodes_.size())](Tape& t) {
                const Mat& g = t.nodes_[out].g;
                for (std::size_t i = 0; i < xs.size(); ++i) {
                  Mat gi = Mat::Zero(g.rows(), g.cols());
                  bool any = false;
                  for (Eigen::Index c = 0; c < g.cols(); ++c) {
                    for (Eigen::Index r = 0; r < g.rows(); ++r) {
                      if (arg(r, c) == static_cast<int>(i)) {
                        gi(r, c) = g(r, c);
                        any = true;
                      }
                    }
                  }
                  if (any) t.accum(xs[i], gi);
                }
              });
}

// ---------------------------------------------------------------------------
// broadcast

int Tape::add_row(int a, int row) {
  Mat y = nodes_[a].v;
  y.rowwise() += nodes_[row].v.row(0);
  const bool ng = wants_grad(a) || wants_grad(row);
  return push(std::move(y), ng, [a, row, out = static_cast<int>(nodes_.size())](Tape& t) {
    const Mat& g = t.nodes_[out].g;
    t.accum(a, g);
    t.accum(row, Mat(g.colwise().sum()));
  });
}

int Tape::mul_col(int a, int col) {
  Mat y = nodes_[a].v.array().colwise() * nodes_[col].v.col(0).array();
  const bool ng = wants_grad(a) || wants_grad(col);
  return push(std::move(y), ng, [a, col, out = static_cast<int>(nodes_.size())](Tape& t) {
    const Mat& g = t.nodes_[out].g;
    t.accum(a, Mat(g.array().colwise() * t.nodes_[col].v.col(0).array()));
    t.accum(col, Mat(g.cwiseProduct(t.nodes_[a].v).rowwise().sum()));
  });
}

// ---------------------------------------------------------------------------
// linear algebra

int Tape::matmul(int a, int b) {
  if (nodes_[a].v.cols() != nodes_[b].v.rows()) {
    throw std::invalid_argument("Tape::matmul: inner dimensions disagree");
  }
  Mat y = nodes_[a].v * nodes_[b].v;
  const bool ng = wants_grad(a) || wants_grad(b);
  return push(std::move(y), ng, [a, b, out = static_cast<int>(nodes_.size())](Tape& t) {
    const Mat& g = t.nodes_[out].g;
    t.accum(a, Mat(g * t.nodes_[b].v.transpose()));
    t.accum(b, Mat(t.nodes_[a].v.transpose() * g));
  });
}

int Tape::transpose(int a) {
  Mat y = nodes_[a].v.transpose();
  return push(std::move(y), wants_grad(a), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
    t.accum(a, Mat(t.nodes_[out].g.transpose()));
  });
}

// ---------------------------------------------------------------------------
// shape

int Tape::concat_cols(const std::vector<int>& xs) {
  if (xs.empty()) throw std::invalid_argument("Tape::concat_cols: empty list");
  const Eigen::Index rows = nodes_[xs[0]].v.rows();
  Eigen::Index cols = 0;
  for (int x : xs) {
    if (nodes_[x].v.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += nodes_[x].v.cols();
  }
  Mat y(rows, cols);
  Eigen::Index c = 0;
  bool ng = false;
  for (int x : xs) {
    y.middleCols(c, nodes_[x].v.cols()) = nodes_[x].v;
    c += nodes_[x].v.cols();
    ng = ng || wants_grad(x);
  }
  return push(std::move(y), ng, [xs, out = static_cast<int>(nodes_.size())](Tape& t) {
    const Mat& g = t.nodes_[out].g;
    Eigen::Index c = 0;
    for (int x : xs) {
      const Eigen::Index n = t.nodes_[x].v.cols();
      t.accum(x, Mat(g.middleCols(c, n)));
      c += n;
    }
  });
}

int Tape::concat_rows(const std::vector<int>& xs) {
  if (xs.empty()) throw std::invalid_argument("Tape::concat_rows: empty list");
  const Eigen::Index cols = nodes_[xs[0]].v.cols();
  Eigen::Index rows = 0;
  for (int x : xs) {
    if (nodes_[x].v.cols() != cols) throw std::invalid_argument("concat_rows: col mismatch");
    rows += nodes_[x].v.rows();
  }
  Mat y(rows, cols);
  Eigen::Index r = 0;
  bool ng = false;
  for (int x : xs) {
    y.middleRows(r, nodes_[x].v.rows()) = nodes_[x].v;
    r += nodes_[x].v.rows();
    ng = ng || wants_grad(x);
  }
  return push(std::move(y), ng, [xs, out = static_cast<int>(nodes_.size())](Tape& t) {
    const Mat& g = t.nodes_[out].g;
    Eigen::Index r = 0;
    for (int x : xs) {
      const Eigen::Index n = t.nodes_[x].v.rows();
      t.accum(x, Mat(g.middleRows(r, n)));
      r += n;
    }
  });
}

int Tape::slice_cols(int a, int c0, int n) {
  Mat y = nodes_[a].v.middleCols(c0, n);
  return push(std::move(y), wants_grad(a), [a, c0, n, out = static_cast<int>(nodes_.size())](Tape& t) {
    Mat g = Mat::Zero(t.nodes_[a].v.rows(), t.nodes_[a].v.cols());
    g.middleCols(c0, n) = t.nodes_[out].g;
    t.accum(a, g);
  });
}

int Tape::slice_rows(int a, int r0, int n) {
  Mat y = nodes_[a].v.middleRows(r0, n);
  return push(std::move(y), wants_grad(a), [a, r0, n, out = static_cast<int>(nodes_.size())](Tape& t) {
    Mat g = Mat::Zero(t.nodes_[a].v.rows(), t.nodes_[a].v.cols());
    g.middleRows(r0, n) = t.nodes_[out].g;
    t.accum(a, g);
  });
}

int Tape::reshape(int a, int rows, int cols) {
  const Mat& x = nodes_[a].v;
  if (x.size() != static_cast<Eigen::Index>(rows) * cols) {
    throw std::invalid_argument("Tape::reshape: element count mismatch");
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor rm = x;
  Mat y = Eigen::Map<RowMajor>(rm.data(), rows, cols);
  return push(std::move(y), wants_grad(a),
              [a, out = static_cast<int>(nodes_.size())](Tape& t) {
                const Mat& src = t.nodes_[a].v;
                RowMajor gm = t.nodes_[out].g;
                Mat g = Eigen::Map<RowMajor>(gm.data(), src.rows(), src.cols());
                t.accum(a, g);
              });
}

// ---------------------------------------------------------------------------
// reductions / normalization

int Tape::mean_all(int a) {
  Mat y(1, 1);
  y(0, 0) = nodes_[a].v.mean();
  return push(std::move(y), wants_grad(a), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
    const Mat& x = t.nodes_[a].v;
    const double s = t.nodes_[out].g(0, 0) / static_cast<double>(x.size());
    t.accum(a, Mat(Mat::Constant(x.rows(), x.cols(), s)));
  });
}

int Tape::mean_rows(int a) {
  Mat y = nodes_[a].v.colwise().mean();
  return push(std::move(y), wants_grad(a), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
    const Mat& x = t.nodes_[a].v;
    const Mat& g = t.nodes_[out].g;
    Mat gx(x.rows(), x.cols());
    gx.rowwise() = g.row(0) / static_cast<double>(x.rows());
    t.accum(a, gx);
  });
}

int Tape::softmax_rows(int a) {
  const Mat& x = nodes_[a].v;
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Eigen::ArrayXd e = (x.row(r).array() - x.row(r).maxCoeff()).exp();
    y.row(r) = e / e.sum();
  }
  return push(std::move(y), wants_grad(a), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
    const Mat& y = t.nodes_[out].v;
    const Mat& g = t.nodes_[out].g;
    Mat gx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).cwiseProduct(y.row(r)).sum();
      gx.row(r) = (g.row(r).array() - dot) * y.row(r).array();
    }
    t.accum(a, gx);
  });
}

int Tape::layer_norm(int a, int gamma, int beta, double eps) {
  const Mat& x = nodes_[a].v;
  const Eigen::Index d = x.cols();
  Mat xhat(x.rows(), d);
  Eigen::ArrayXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  Mat y = xhat;
  y.array().rowwise() *= nodes_[gamma].v.row(0).array();
  y.rowwise() += nodes_[beta].v.row(0);
  const bool ng = wants_grad(a) || wants_grad(gamma) || wants_grad(beta);
  return push(std::move(y), ng,
              [a, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std),
               out = static_cast<int>(nodes_.size())](Tape& t) {
                const Mat& g = t.nodes_[out].g;
                const auto gam = t.nodes_[gamma].v.row(0).array();
                Mat h = g.array().rowwise() * gam;  // dL/dxhat
                Mat gx(g.rows(), g.cols());
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                  const double mh = h.row(r).mean();
                  const double mhx = h.row(r).cwiseProduct(xhat.row(r)).mean();
                  gx.row(r) =
                      (h.row(r).array() - mh - xhat.row(r).array() * mhx) * inv_std(r);
                }
                t.accum(a, gx);
                t.accum(gamma, Mat(g.cwiseProduct(xhat).colwise().sum()));
                t.accum(beta, Mat(g.colwise().sum()));
              });
}

int Tape::group_norm(int a, int gamma, int beta, int groups, double eps) {
  const Mat& x = nodes_[a].v;
  const Eigen::Index c = x.rows();
  if (groups < 1 || c % groups != 0) {
    throw std::invalid_argument("Tape::group_norm: groups must divide channel count");
  }
  const Eigen::Index cg = c / groups;
  Mat xhat(x.rows(), x.cols());
  Eigen::ArrayXd inv_std(groups);
  for (int gi = 0; gi < groups; ++gi) {
    auto blk = x.middleRows(gi * cg, cg);
    const double mu = blk.mean();
    const double var = (blk.array() - mu).square().mean();
    inv_std(gi) = 1.0 / std::sqrt(var + eps);
    xhat.middleRows(gi * cg, cg) = (blk.array() - mu) * inv_std(gi);
  }
  Mat y = xhat.array().colwise() * nodes_[gamma].v.col(0).array();
  y.array().colwise() += nodes_[beta].v.col(0).array();
  const bool ng = wants_grad(a) || wants_grad(gamma) || wants_grad(beta);
  return push(std::move(y), ng,
              [a, gamma, beta, cg, groups, xhat = std::move(xhat), inv_std = std::move(inv_std),
               out = static_cast<int>(nodes_.size())](Tape& t) {
                const Mat& g = t.nodes_[out].g;
                Mat h = g.array().colwise() * t.nodes_[gamma].v.col(0).array();
                Mat gx(g.rows(), g.cols());
                for (int gi = 0; gi < groups; ++gi) {
                  auto hb = h.middleRows(gi * cg, cg);
                  auto xb = xhat.middleRows(gi * cg, cg);
                  const double mh = hb.mean();
                  const double mhx = hb.cwiseProduct(xb).mean();
                  gx.middleRows(gi * cg, cg) = (hb.array() - mh - xb.array() * mhx) * inv_std(gi);
                }
                t.accum(a, gx);
                t.accum(gamma, Mat(g.cwiseProduct(xhat).rowwise().sum()));
                t.accum(beta, Mat(g.rowwise().sum()));
              });
}

int Tape::group_norm_masked(int a, int gamma, int beta, int groups,
                            const std::vector<std::uint8_t>& mask, double eps) {
  const Mat& x = nodes_[a].v;
  const Eigen::Index c = x.rows();
  if (groups < 1 || c % groups != 0) {
    throw std::invalid_argument("Tape::group_norm_masked: groups must divide channel count");
  }
  if (mask.size() != static_cast<std::size_t>(x.cols())) {
    throw std::invalid_argument("Tape::group_norm_masked: mask size mismatch");
  }
  std::vector<Eigen::Index> sel;
  sel.reserve(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) sel.push_back(static_cast<Eigen::Index>(i));
  }
  if (sel.empty()) throw std::invalid_argument("Tape::group_norm_masked: empty mask");

  const Eigen::Index cg = c / groups;
  Mat xhat(x.rows(), x.cols());
  Eigen::ArrayXd inv_std(groups);
  for (int gi = 0; gi < groups; ++gi) {
    auto blk = x.middleRows(gi * cg, cg);
    double sum = 0.0, sum2 = 0.0;
    for (Eigen::Index s : sel) {
      for (Eigen::Index r = 0; r < cg; ++r) {
        const double v = blk(r, s);
        sum += v;
        sum2 += v * v;
      }
    }
    const double n = static_cast<double>(cg * static_cast<Eigen::Index>(sel.size()));
    const double mu = sum / n;
    const double var = std::max(0.0, sum2 / n - mu * mu);
    inv_std(gi) = 1.0 / std::sqrt(var + eps);
    xhat.middleRows(gi * cg, cg) = (blk.array() - mu) * inv_std(gi);
  }
  Mat y = xhat.array().colwise() * nodes_[gamma].v.col(0).array();
  y.array().colwise() += nodes_[beta].v.col(0).array();
  const bool ng = wants_grad(a) || wants_grad(gamma) || wants_grad(beta);
  return push(std::move(y), ng,
              [a, gamma, beta, cg, groups, sel = std::move(sel), xhat = std::move(xhat),
               inv_std = std::move(inv_std), out = static_cast<int>(nodes_.size())](Tape& t) {
                const Mat& g = t.nodes_[out].g;
                Mat h = g.array().colwise() * t.nodes_[gamma].v.col(0).array();
                Mat gx = Mat::Zero(g.rows(), g.cols());
                const double n = static_cast<double>(cg * static_cast<Eigen::Index>(sel.size()));
                for (int gi = 0; gi < groups; ++gi) {
                  auto hb = h.middleRows(gi * cg, cg);
                  auto xb = xhat.middleRows(gi * cg, cg);
                  // A = sum of dL/dxhat over all outputs; B = sum of dL/dxhat * xhat
                  const double A = hb.sum();
                  const double B = hb.cwiseProduct(xb).sum();
                  auto gb = gx.middleRows(gi * cg, cg);
                  gb = hb * inv_std(gi);
                  for (Eigen::Index s : sel) {
                    gb.col(s).array() -= inv_std(gi) * (A + xb.col(s).array() * B) / n;
                  }
                }
                t.accum(a, gx);
                t.accum(gamma, Mat(g.cwiseProduct(xhat).rowwise().sum()));
                t.accum(beta, Mat(g.rowwise().sum()));
              });
}

// ---------------------------------------------------------------------------
// vision

Mat blur3_apply(const Mat& x, int h, int w) {
  Mat tmp = Mat::Zero(x.rows(), x.cols());
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      auto col = tmp.col(static_cast<Eigen::Index>(i) * w + j);
      col = 0.5 * x.col(static_cast<Eigen::Index>(i) * w + j);
      if (j > 0) col += 0.25 * x.col(static_cast<Eigen::Index>(i) * w + j - 1);
      if (j + 1 < w) col += 0.25 * x.col(static_cast<Eigen::Index>(i) * w + j + 1);
    }
  }
  Mat out = Mat::Zero(x.rows(), x.cols());
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      auto col = out.col(static_cast<Eigen::Index>(i) * w + j);
      col = 0.5 * tmp.col(static_cast<Eigen::Index>(i) * w + j);
      if (i > 0) col += 0.25 * tmp.col(static_cast<Eigen::Index>(i - 1) * w + j);
      if (i + 1 < h) col += 0.25 * tmp.col(static_cast<Eigen::Index>(i + 1) * w + j);
    }
  }
  return out;
}

std::vector<std::uint8_t> disk_mask(int side, double frac) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(side) * side, 0);
  const double c = (side - 1) / 2.0;
  const double r2 = frac * side / 2.0 * (frac * side / 2.0);
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      if ((i - c) * (i - c) + (j - c) * (j - c) <= r2) {
        mask[static_cast<std::size_t>(i) * side + j] = 1;
      }
    }
  }
  return mask;
}

int Tape::blur3(int x, int h, int w) {
  Mat y = blur3_apply(nodes_[x].v, h, w);
  return push(std::move(y), wants_grad(x),
              [x, h, w, out = static_cast<int>(nodes_.size())](Tape& t) {
                // the kernel is symmetric and zero-padded, so the adjoint is
                // the same blur
                t.accum(x, blur3_apply(t.nodes_[out].g, h, w));
              });
}

Mat im2col(const Mat& x, const ConvSpec& s) {
  const int oh = s.out_h(), ow = s.out_w();
  Mat cols = Mat::Zero(static_cast<Eigen::Index>(s.in_ch) * s.kernel * s.kernel,
                       static_cast<Eigen::Index>(oh) * ow);
  for (int c = 0; c < s.in_ch; ++c) {
    for (int ki = 0; ki < s.kernel; ++ki) {
      for (int kj = 0; kj < s.kernel; ++kj) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * s.kernel + ki) * s.kernel + kj;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * s.stride - s.pad + ki;
          if (ii < 0 || ii >= s.in_h) continue;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * s.stride - s.pad + kj;
            if (jj < 0 || jj >= s.in_w) continue;
            cols(row, static_cast<Eigen::Index>(oi) * ow + oj) =
                x(c, static_cast<Eigen::Index>(ii) * s.in_w + jj);
          }
        }
      }
    }
  }
  return cols;
}

namespace {

void col2im_accum(const Mat& dcols, const ConvSpec& s, Mat& dx) {
  const int oh = s.out_h(), ow = s.out_w();
  for (int c = 0; c < s.in_ch; ++c) {
    for (int ki = 0; ki < s.kernel; ++ki) {
      for (int kj = 0; kj < s.kernel; ++kj) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * s.kernel + ki) * s.kernel + kj;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * s.stride - s.pad + ki;
          if (ii < 0 || ii >= s.in_h) continue;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * s.stride - s.pad + kj;
            if (jj < 0 || jj >= s.in_w) continue;
            dx(c, static_cast<Eigen::Index>(ii) * s.in_w + jj) +=
                dcols(row, static_cast<Eigen::Index>(oi) * ow + oj);
          }
        }
      }
    }
  }
}

}  // namespace

int Tape::conv2d(int x, int w, int b, const ConvSpec& spec) {
  const Mat& xv = nodes_[x].v;
  const Mat& wv = nodes_[w].v;
  if (xv.rows() != spec.in_ch || xv.cols() != static_cast<Eigen::Index>(spec.in_h) * spec.in_w) {
    throw std::invalid_argument("Tape::conv2d: input shape disagrees with spec");
  }
  if (wv.rows() != spec.out_ch ||
      wv.cols() != static_cast<Eigen::Index>(spec.in_ch) * spec.kernel * spec.kernel) {
    throw std::invalid_argument("Tape::conv2d: weight shape disagrees with spec");
  }
  Mat cols = im2col(xv, spec);
  Mat y = wv * cols;
  if (b >= 0) y.colwise() += nodes_[b].v.row(0).transpose();
  bool ng = wants_grad(x) || wants_grad(w) || (b >= 0 && wants_grad(b));
  return push(std::move(y), ng,
              [x, w, b, spec, out = static_cast<int>(nodes_.size())](Tape& t) {
                const Mat& g = t.nodes_[out].g;
                Mat cols = im2col(t.nodes_[x].v, spec);
                if (t.wants_grad(w)) t.accum(w, Mat(g * cols.transpose()));
                if (b >= 0 && t.wants_grad(b)) t.accum(b, Mat(g.rowwise().sum().transpose()));
                if (t.wants_grad(x)) {
                  Mat dcols = t.nodes_[w].v.transpose() * g;
                  Mat dx = Mat::Zero(t.nodes_[x].v.rows(), t.nodes_[x].v.cols());
                  col2im_accum(dcols, spec, dx);
                  t.accum(x, dx);
                }
              });
}

int Tape::rotate(int x, const RotateTable& table) {
  Mat y = rotate_channels(nodes_[x].v, table);
  return push(std::move(y), wants_grad(x),
              [x, &table, out = static_cast<int>(nodes_.size())](Tape& t) {
                Mat dx = Mat::Zero(t.nodes_[x].v.rows(), t.nodes_[x].v.cols());
                rotate_channels_backward(t.nodes_[out].g, table, dx);
                t.accum(x, dx);
              });
}

}  // namespace bevloc::nn
