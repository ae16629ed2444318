#pragma once

#include <array>
#include <map>
#include <vector>

#include "bevloc/bev.hpp"
#include "bevloc/nn/layers.hpp"

namespace bevloc {

struct FeatureNetConfig {
  int rotation_count = 8;  // N_R, rotation set {2*pi*k/N_R}
  int input_side = 128;    // BEV image side fed to the backbone
  std::array<int, 4> backbone_widths = {32, 64, 128, 128};
  int patch = 4;      // effective patch of the conv stem
  int vit_dim = 256;  // token dimension d
  int vit_depth = 6;
  int vit_heads = 4;
  int vit_mlp_ratio = 4;
  int output_dim = 512;  // matches the denoiser conditioning width

  int feature_side() const { return input_side / 4; }  // two stride-2 stages
  int mfa_channels() const { return backbone_widths[3]; }
  int token_grid() const { return feature_side() / patch; }
  int token_count() const { return token_grid() * token_grid(); }

  void validate() const;
};

/// Rotation-equivariant feature extractor: a shared-weight convolutional
/// backbone evaluated over a closed rotation set with max aggregation,
/// a conv-stem ViT encoder, and a gated global pooling head.
class FeatureNet {
 public:
  FeatureNet(nn::ParamSet& ps, Rng& rng, const FeatureNetConfig& cfg);

  const FeatureNetConfig& config() const { return cfg_; }

  /// Backbone phi: [1, side^2] -> [C, (side/4)^2].
  int backbone_forward(nn::Tape& t, nn::ParamBinding& pb, int img) const;

  /// Max over the rotation set of rotate(phi(rotate(img, r)), -r).
  /// img_row is the flattened image [1, side^2], row-major pixels.
  int mfa_forward(nn::Tape& t, nn::ParamBinding& pb, const nn::Mat& img_row) const;

  /// Conv-stem tokenization of the MFA map: [C, S] -> [M, d] tokens,
  /// before positional embeddings are added.
  int tokenize(nn::Tape& t, nn::ParamBinding& pb, int fmap) const;

  /// Positional embeddings + pre-norm encoder stack + final norm.
  int vit_forward(nn::Tape& t, nn::ParamBinding& pb, int tokens) const;

  /// Sigmoid-gated token reweighting followed by mean pooling: [M,d] -> [1,d].
  int gated_pool(nn::Tape& t, nn::ParamBinding& pb, int vit_tokens) const;

  /// gated_pool followed by the output projection: [1, output_dim].
  int global_head(nn::Tape& t, nn::ParamBinding& pb, int vit_tokens) const;

  /// Full path: MFA -> ViT -> head.
  int forward(nn::Tape& t, nn::ParamBinding& pb, const BevImage& img) const;

  /// Flattens side x side pixels into the [1, side^2] row the net consumes.
  static nn::Mat flatten_image(const BevImage& img);

 private:
  const std::vector<std::uint8_t>& stat_mask(int side) const;

  FeatureNetConfig cfg_;
  nn::Conv2d stem_;
  struct ResBlock {
    nn::GroupNorm gn1, gn2;
    nn::Conv2d conv1, conv2, skip;  // skip.w == -1 when identity
    bool has_skip = false;
    int stride = 1;
  };
  std::array<ResBlock, 3> blocks_;
  nn::GroupNorm out_norm_;
  mutable std::map<int, std::vector<std::uint8_t>> masks_;  // per spatial side

  nn::Conv2d vstem1_, vstem2_, vproj_;
  nn::GroupNorm vnorm1_, vnorm2_;
  int pos_emb_ = -1;
  std::vector<nn::TransformerBlock> encoder_;
  nn::LayerNorm final_norm_;
  nn::Linear gate_fc_, out_proj_;

  std::vector<nn::RotateTable> in_tables_, feat_tables_;  // index 0 unused
};

/// Bilinear rotation of a square single-channel image about its center,
/// zero fill outside; positive angles follow the cloud-yaw convention.
/// Throws std::invalid_argument for non-square input.
Eigen::MatrixXd rotate_image(const Eigen::MatrixXd& img, double angle);

/// Same for channel-major [C, h*w] data with square h = w.
nn::Mat rotate_image_channels(const nn::Mat& chw, int side, double angle);

}  // namespace bevloc
