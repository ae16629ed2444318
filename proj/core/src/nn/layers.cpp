#include "bevloc/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace bevloc::nn {

int ParamSet::add(const std::string& name, int rows, int cols, double init_std, Rng& rng) {
  if (index_.count(name)) throw std::logic_error("ParamSet: duplicate parameter " + name);
  Mat v(rows, cols);
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    for (Eigen::Index r = 0; r < v.rows(); ++r) v(r, c) = init_std * rng.normal();
  }
  names_.push_back(name);
  values_.push_back(std::move(v));
  index_[name] = size() - 1;
  return size() - 1;
}

int ParamSet::add_constant(const std::string& name, int rows, int cols, double fill) {
  if (index_.count(name)) throw std::logic_error("ParamSet: duplicate parameter " + name);
  names_.push_back(name);
  values_.push_back(Mat::Constant(rows, cols, fill));
  index_[name] = size() - 1;
  return size() - 1;
}

int ParamSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

Mat& ParamSet::operator[](const std::string& name) {
  const int i = find(name);
  if (i < 0) throw std::out_of_range("ParamSet: no parameter named " + name);
  return values_[i];
}

std::int64_t ParamSet::scalar_count() const {
  std::int64_t n = 0;
  for (const Mat& v : values_) n += v.size();
  return n;
}

int ParamBinding::node(int param_idx) {
  int& id = node_[param_idx];
  if (id < 0) id = tape_->leaf(ps_->value(param_idx), trainable_);
  return id;
}

void ParamBinding::export_grads(std::vector<Mat>& grads, double scale) const {
  grads.resize(ps_->size());
  for (int i = 0; i < ps_->size(); ++i) {
    if (node_[i] < 0) continue;
    Mat g;
    try {
      g = tape_->grad(node_[i]);
    } catch (const std::logic_error&) {
      continue;  // bound but unreached by backward
    }
    if (grads[i].size() == 0) {
      grads[i] = scale * g;
    } else {
      grads[i] += scale * g;
    }
  }
}

// ---------------------------------------------------------------------------

Linear Linear::make(ParamSet& ps, Rng& rng, const std::string& name, int in, int out, bool bias) {
  Linear l;
  l.w = ps.add(name + ".w", in, out, std::sqrt(1.0 / in), rng);
  if (bias) l.b = ps.add_constant(name + ".b", 1, out, 0.0);
  return l;
}

int Linear::forward(Tape& t, ParamBinding& pb, int x) const {
  int y = t.matmul(x, pb.node(w));
  if (b >= 0) y = t.add_row(y, pb.node(b));
  return y;
}

LayerNorm LayerNorm::make(ParamSet& ps, const std::string& name, int dim) {
  LayerNorm l;
  l.gamma = ps.add_constant(name + ".gamma", 1, dim, 1.0);
  l.beta = ps.add_constant(name + ".beta", 1, dim, 0.0);
  return l;
}

int LayerNorm::forward(Tape& t, ParamBinding& pb, int x) const {
  return t.layer_norm(x, pb.node(gamma), pb.node(beta));
}

namespace {
int pick_groups(int channels) {
  for (int g : {8, 4, 2}) {
    if (channels % g == 0 && channels >= g) return g;
  }
  return 1;
}
}  // namespace

GroupNorm GroupNorm::make(ParamSet& ps, const std::string& name, int channels) {
  GroupNorm n;
  n.groups = pick_groups(channels);
  n.gamma = ps.add_constant(name + ".gamma", channels, 1, 1.0);
  n.beta = ps.add_constant(name + ".beta", channels, 1, 0.0);
  return n;
}

int GroupNorm::forward(Tape& t, ParamBinding& pb, int x) const {
  return t.group_norm(x, pb.node(gamma), pb.node(beta), groups);
}

int GroupNorm::forward_masked(Tape& t, ParamBinding& pb, int x,
                              const std::vector<std::uint8_t>& mask) const {
  return t.group_norm_masked(x, pb.node(gamma), pb.node(beta), groups, mask);
}

Conv2d Conv2d::make(ParamSet& ps, Rng& rng, const std::string& name, int in_ch, int out_ch,
                    int kernel, int stride, int pad, bool bias) {
  Conv2d c;
  c.in_ch = in_ch;
  c.out_ch = out_ch;
  c.kernel = kernel;
  c.stride = stride;
  c.pad = pad;
  const int fan_in = in_ch * kernel * kernel;
  c.w = ps.add(name + ".w", out_ch, fan_in, std::sqrt(2.0 / fan_in), rng);
  if (bias) c.b = ps.add_constant(name + ".b", 1, out_ch, 0.0);
  return c;
}

int Conv2d::forward(Tape& t, ParamBinding& pb, int x, int& h, int& w_) const {
  ConvSpec spec{in_ch, out_ch, kernel, stride, pad, h, w_};
  const int y = t.conv2d(x, pb.node(w), b >= 0 ? pb.node(b) : -1, spec);
  h = spec.out_h();
  w_ = spec.out_w();
  return y;
}

Mhsa Mhsa::make(ParamSet& ps, Rng& rng, const std::string& name, int dim, int heads) {
  if (dim % heads != 0) throw std::invalid_argument("Mhsa: dim must be divisible by heads");
  Mhsa m;
  m.heads = heads;
  m.dim = dim;
  m.wq = Linear::make(ps, rng, name + ".q", dim, dim);
  m.wk = Linear::make(ps, rng, name + ".k", dim, dim);
  m.wv = Linear::make(ps, rng, name + ".v", dim, dim);
  m.wo = Linear::make(ps, rng, name + ".o", dim, dim);
  return m;
}

int Mhsa::forward(Tape& t, ParamBinding& pb, int x) const {
  const int dh = dim / heads;
  const int q = wq.forward(t, pb, x);
  const int k = wk.forward(t, pb, x);
  const int v = wv.forward(t, pb, x);
  std::vector<int> head_outs;
  head_outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const int qh = t.slice_cols(q, h * dh, dh);
    const int kh = t.slice_cols(k, h * dh, dh);
    const int vh = t.slice_cols(v, h * dh, dh);
    int scores = t.matmul(qh, t.transpose(kh));
    scores = t.scale(scores, 1.0 / std::sqrt(static_cast<double>(dh)));
    const int attn = t.softmax_rows(scores);
    head_outs.push_back(t.matmul(attn, vh));
  }
  return wo.forward(t, pb, t.concat_cols(head_outs));
}

TransformerBlock TransformerBlock::make(ParamSet& ps, Rng& rng, const std::string& name, int dim,
                                        int heads, int mlp_ratio) {
  TransformerBlock b;
  b.ln1 = LayerNorm::make(ps, name + ".ln1", dim);
  b.attn = Mhsa::make(ps, rng, name + ".attn", dim, heads);
  b.ln2 = LayerNorm::make(ps, name + ".ln2", dim);
  b.fc1 = Linear::make(ps, rng, name + ".fc1", dim, dim * mlp_ratio);
  b.fc2 = Linear::make(ps, rng, name + ".fc2", dim * mlp_ratio, dim);
  return b;
}

int TransformerBlock::forward(Tape& t, ParamBinding& pb, int x) const {
  x = t.add(x, attn.forward(t, pb, ln1.forward(t, pb, x)));
  x = t.add(x, fc2.forward(t, pb, t.gelu(fc1.forward(t, pb, ln2.forward(t, pb, x)))));
  return x;
}

}  // namespace bevloc::nn
