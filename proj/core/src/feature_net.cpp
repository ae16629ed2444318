#include "bevloc/feature_net.hpp"

#include <cmath>
#include <stdexcept>

namespace bevloc {

using nn::Mat;
using nn::ParamBinding;
using nn::Tape;

void FeatureNetConfig::validate() const {
  if (rotation_count < 1) throw std::invalid_argument("FeatureNetConfig: rotation_count >= 1");
  if (input_side < 8 || input_side % 4 != 0) {
    throw std::invalid_argument("FeatureNetConfig: input_side must be a multiple of 4");
  }
  if (feature_side() % patch != 0) {
    throw std::invalid_argument("FeatureNetConfig: feature side not divisible by patch");
  }
  if (vit_dim % vit_heads != 0) {
    throw std::invalid_argument("FeatureNetConfig: vit_dim must be divisible by vit_heads");
  }
  for (int w : backbone_widths) {
    if (w < 1) throw std::invalid_argument("FeatureNetConfig: backbone widths must be positive");
  }
}

FeatureNet::FeatureNet(nn::ParamSet& ps, Rng& rng, const FeatureNetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto& w = cfg_.backbone_widths;

  stem_ = nn::Conv2d::make(ps, rng, "backbone.stem", 1, w[0], 3, 1, 1);
  const std::array<int, 3> in_ch = {w[0], w[1], w[2]};
  const std::array<int, 3> out_ch = {w[1], w[2], w[3]};
  const std::array<int, 3> strides = {2, 2, 1};
  for (int i = 0; i < 3; ++i) {
    auto& b = blocks_[i];
    const std::string name = "backbone.block" + std::to_string(i + 1);
    b.stride = strides[i];
    b.gn1 = nn::GroupNorm::make(ps, name + ".gn1", in_ch[i]);
    b.conv1 = nn::Conv2d::make(ps, rng, name + ".conv1", in_ch[i], out_ch[i], 3, strides[i], 1);
    b.gn2 = nn::GroupNorm::make(ps, name + ".gn2", out_ch[i]);
    b.conv2 = nn::Conv2d::make(ps, rng, name + ".conv2", out_ch[i], out_ch[i], 3, 1, 1);
    b.has_skip = (strides[i] != 1) || (in_ch[i] != out_ch[i]);
    if (b.has_skip) {
      b.skip = nn::Conv2d::make(ps, rng, name + ".skip", in_ch[i], out_ch[i], 1, strides[i], 0);
    }
  }
  out_norm_ = nn::GroupNorm::make(ps, "backbone.out_norm", w[3]);
  for (int side : {cfg_.input_side, cfg_.input_side / 2, cfg_.feature_side()}) {
    masks_[side] = nn::disk_mask(side, 0.75);
  }

  const int stem_mid = std::max(cfg_.vit_dim / 2, 8);
  vstem1_ = nn::Conv2d::make(ps, rng, "vit.stem1", cfg_.mfa_channels(), stem_mid, 3, 2, 1);
  vnorm1_ = nn::GroupNorm::make(ps, "vit.stem1_norm", stem_mid);
  vstem2_ = nn::Conv2d::make(ps, rng, "vit.stem2", stem_mid, cfg_.vit_dim, 3, 2, 1);
  vnorm2_ = nn::GroupNorm::make(ps, "vit.stem2_norm", cfg_.vit_dim);
  vproj_ = nn::Conv2d::make(ps, rng, "vit.stem_proj", cfg_.vit_dim, cfg_.vit_dim, 1, 1, 0);

  pos_emb_ = ps.add("vit.pos_emb", cfg_.token_count(), cfg_.vit_dim, 0.02, rng);
  encoder_.reserve(cfg_.vit_depth);
  for (int i = 0; i < cfg_.vit_depth; ++i) {
    encoder_.push_back(nn::TransformerBlock::make(ps, rng, "vit.block" + std::to_string(i),
                                                  cfg_.vit_dim, cfg_.vit_heads,
                                                  cfg_.vit_mlp_ratio));
  }
  final_norm_ = nn::LayerNorm::make(ps, "vit.final_norm", cfg_.vit_dim);
  gate_fc_ = nn::Linear::make(ps, rng, "head.gate", cfg_.vit_dim, 1);
  out_proj_ = nn::Linear::make(ps, rng, "head.proj", cfg_.vit_dim, cfg_.output_dim);

  in_tables_.resize(cfg_.rotation_count);
  feat_tables_.resize(cfg_.rotation_count);
  for (int k = 1; k < cfg_.rotation_count; ++k) {
    const double angle = 2.0 * M_PI * k / cfg_.rotation_count;
    in_tables_[k] = nn::make_rotate_table(cfg_.input_side, cfg_.input_side, angle);
    feat_tables_[k] =
        nn::make_rotate_table(cfg_.feature_side(), cfg_.feature_side(), -angle);
  }
}

const std::vector<std::uint8_t>& FeatureNet::stat_mask(int side) const {
  auto it = masks_.find(side);
  if (it == masks_.end()) it = masks_.emplace(side, nn::disk_mask(side, 0.75)).first;
  return it->second;
}

int FeatureNet::backbone_forward(Tape& t, ParamBinding& pb, int img) const {
  // Normalization statistics live on the rotation-stable central disk and
  // every stride-2 path is low-passed first, so the features a rotated
  // branch produces match the rotated features of the base branch up to
  // interpolation error instead of global statistic shifts / aliasing.
  int h = cfg_.input_side, w = cfg_.input_side;
  int x = stem_.forward(t, pb, img, h, w);
  for (const auto& b : blocks_) {
    int ph = h, pw = w;
    int y = b.gn1.forward_masked(t, pb, x, stat_mask(h));
    y = t.gelu(y);
    if (b.stride != 1) y = t.blur3(y, h, w);
    y = b.conv1.forward(t, pb, y, h, w);
    y = b.gn2.forward_masked(t, pb, y, stat_mask(h));
    y = t.gelu(y);
    int hh = h, ww = w;
    y = b.conv2.forward(t, pb, y, hh, ww);
    int s = x;
    if (b.has_skip) {
      s = (b.stride != 1) ? t.blur3(x, ph, pw) : x;
      s = b.skip.forward(t, pb, s, ph, pw);
    }
    x = t.add(y, s);
  }
  x = out_norm_.forward_masked(t, pb, x, stat_mask(h));
  // Bound and band-limit the branch output before the cross-rotation max;
  // compressed tails and smooth maps keep the aggregate transportable by
  // the bilinear feature rotations.
  x = t.tanh(x);
  x = t.blur3(x, h, w);
  return t.blur3(x, h, w);
}

int FeatureNet::mfa_forward(Tape& t, ParamBinding& pb, const Mat& img_row) const {
  if (img_row.rows() != 1 ||
      img_row.cols() != static_cast<Eigen::Index>(cfg_.input_side) * cfg_.input_side) {
    throw std::invalid_argument("FeatureNet::mfa_forward: image row has wrong size");
  }
  std::vector<int> branches;
  branches.reserve(cfg_.rotation_count);
  for (int k = 0; k < cfg_.rotation_count; ++k) {
    int x = t.leaf(img_row);
    if (k > 0) x = t.rotate(x, in_tables_[k]);
    int f = backbone_forward(t, pb, x);
    if (k > 0) f = t.rotate(f, feat_tables_[k]);
    branches.push_back(f);
  }
  if (branches.size() == 1) return branches[0];
  return t.maximum(branches);
}

int FeatureNet::tokenize(Tape& t, ParamBinding& pb, int fmap) const {
  int h = cfg_.feature_side(), w = cfg_.feature_side();
  int x = vstem1_.forward(t, pb, fmap, h, w);
  x = vnorm1_.forward(t, pb, x);
  x = t.gelu(x);
  x = vstem2_.forward(t, pb, x, h, w);
  x = vnorm2_.forward(t, pb, x);
  x = t.gelu(x);
  x = vproj_.forward(t, pb, x, h, w);
  return t.transpose(x);  // [M, d]
}

int FeatureNet::vit_forward(Tape& t, ParamBinding& pb, int tokens) const {
  int x = t.add(tokens, pb.node(pos_emb_));
  for (const auto& blk : encoder_) x = blk.forward(t, pb, x);
  return final_norm_.forward(t, pb, x);
}

int FeatureNet::gated_pool(Tape& t, ParamBinding& pb, int vit_tokens) const {
  const int gate = t.sigmoid(gate_fc_.forward(t, pb, vit_tokens));  // [M,1]
  const int gated = t.add(vit_tokens, t.mul_col(vit_tokens, gate));
  return t.mean_rows(gated);
}

int FeatureNet::global_head(Tape& t, ParamBinding& pb, int vit_tokens) const {
  return out_proj_.forward(t, pb, gated_pool(t, pb, vit_tokens));
}

int FeatureNet::forward(Tape& t, ParamBinding& pb, const BevImage& img) const {
  const int mfa = mfa_forward(t, pb, flatten_image(img));
  const int vit = vit_forward(t, pb, tokenize(t, pb, mfa));
  return global_head(t, pb, vit);
}

Mat FeatureNet::flatten_image(const BevImage& img) {
  Mat row(1, static_cast<Eigen::Index>(img.side) * img.side);
  for (int r = 0; r < img.side; ++r) {
    for (int c = 0; c < img.side; ++c) {
      row(0, static_cast<Eigen::Index>(r) * img.side + c) = img.pixels(r, c);
    }
  }
  return row;
}

Eigen::MatrixXd rotate_image(const Eigen::MatrixXd& img, double angle) {
  if (img.rows() != img.cols()) {
    throw std::invalid_argument("rotate_image: image must be square");
  }
  const int side = static_cast<int>(img.rows());
  Mat row(1, static_cast<Eigen::Index>(side) * side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) row(0, static_cast<Eigen::Index>(r) * side + c) = img(r, c);
  }
  const Mat rot = rotate_image_channels(row, side, angle);
  Eigen::MatrixXd out(side, side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) out(r, c) = rot(0, static_cast<Eigen::Index>(r) * side + c);
  }
  return out;
}

nn::Mat rotate_image_channels(const nn::Mat& chw, int side, double angle) {
  const auto table = nn::make_rotate_table(side, side, angle);
  return nn::rotate_channels(chw, table);
}

}  // namespace bevloc
