#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bevloc/feature_net.hpp"
#include "bevloc/rng.hpp"
#include "test_util.hpp"

using namespace bevloc;
using nn::Mat;
using testutil::random_mat;

namespace {

FeatureNetConfig tiny_config() {
  FeatureNetConfig c;
  c.rotation_count = 2;
  c.input_side = 32;
  c.backbone_widths = {4, 8, 8, 8};
  c.vit_dim = 16;
  c.vit_depth = 1;
  c.vit_heads = 2;
  c.vit_mlp_ratio = 2;
  c.output_dim = 12;
  return c;
}

BevImage random_bev(Rng& rng, int side) {
  BevImage img;
  img.side = side;
  img.pixels.resize(side, side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      img.pixels(r, c) = rng.uniform() < 0.15 ? rng.uniform() : 0.0;  // sparse, BEV-like
    }
  }
  return img;
}

void zero_params_matching(nn::ParamSet& ps, const std::string& suffix) {
  for (int i = 0; i < ps.size(); ++i) {
    const std::string& n = ps.name(i);
    if (n.size() >= suffix.size() && n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0) {
      ps.value(i).setZero();
    }
  }
}

/// Max-abs difference between two channel-major maps on the central disk of
/// radius `frac * side/2` (borders excluded from equivariance checks).
double central_disk_maxabs(const Mat& a, const Mat& b, int side, double frac) {
  const double c = (side - 1) / 2.0;
  const double r2 = frac * side / 2.0 * frac * side / 2.0;
  double worst = 0.0;
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      if ((i - c) * (i - c) + (j - c) * (j - c) > r2) continue;
      worst = std::max(worst, (a.col(i * side + j) - b.col(i * side + j)).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("rotate_image: identity, pi reversal, quarter-turn round trip") {
  Rng rng(1);
  Eigen::MatrixXd img(16, 16);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) img(r, c) = rng.uniform();
  }
  CHECK((rotate_image(img, 0.0) - img).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::MatrixXd rev = rotate_image(img, M_PI);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) CHECK(rev(r, c) == img(15 - r, 15 - c));
  }

  const Eigen::MatrixXd rt = rotate_image(rotate_image(img, M_PI / 2), -M_PI / 2);
  // central disk comparison (quarter turns are exact, so the whole image matches)
  CHECK((rt - img).cwiseAbs().maxCoeff() < 1e-6);

  Eigen::MatrixXd rect(4, 6);
  rect.setZero();
  CHECK_THROWS_AS(rotate_image(rect, 0.3), std::invalid_argument);
}

TEST_CASE("mfa: singleton rotation set equals the bare backbone") {
  FeatureNetConfig cfg = tiny_config();
  cfg.rotation_count = 1;
  nn::ParamSet ps;
  Rng init(3);
  FeatureNet net(ps, init, cfg);

  Rng rng(4);
  const BevImage img = random_bev(rng, cfg.input_side);
  const Mat row = FeatureNet::flatten_image(img);

  nn::Tape t(false);
  nn::ParamBinding pb(t, ps, false);
  const Mat mfa = t.val(net.mfa_forward(t, pb, row));
  const Mat bare = t.val(net.backbone_forward(t, pb, t.leaf(row)));
  CHECK((mfa - bare).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mfa: zero image with bias-free backbone gives zero features") {
  FeatureNetConfig cfg = tiny_config();
  nn::ParamSet ps;
  Rng init(5);
  FeatureNet net(ps, init, cfg);
  zero_params_matching(ps, ".b");
  zero_params_matching(ps, ".beta");

  BevImage img;
  img.side = cfg.input_side;
  img.pixels = Eigen::MatrixXd::Zero(cfg.input_side, cfg.input_side);

  nn::Tape t(false);
  nn::ParamBinding pb(t, ps, false);
  const Mat mfa = t.val(net.mfa_forward(t, pb, FeatureNet::flatten_image(img)));
  CHECK(mfa.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mfa: branch-enumeration oracle for N_R = 4") {
  FeatureNetConfig cfg = tiny_config();
  cfg.rotation_count = 4;
  nn::ParamSet ps;
  Rng init(6);
  FeatureNet net(ps, init, cfg);

  Rng rng(7);
  const BevImage img = random_bev(rng, cfg.input_side);
  const Mat row = FeatureNet::flatten_image(img);

  // independent path: materialize all four branches through the public ops
  Mat expected;
  for (int k = 0; k < 4; ++k) {
    const double angle = 2.0 * M_PI * k / 4.0;
    const Mat rotated = (k == 0) ? row : rotate_image_channels(row, cfg.input_side, angle);
    nn::Tape t(false);
    nn::ParamBinding pb(t, ps, false);
    Mat feat = t.val(net.backbone_forward(t, pb, t.leaf(rotated)));
    if (k > 0) feat = rotate_image_channels(feat, cfg.feature_side(), -angle);
    expected = (k == 0) ? feat : expected.cwiseMax(feat);
  }

  nn::Tape t(false);
  nn::ParamBinding pb(t, ps, false);
  const Mat got = t.val(net.mfa_forward(t, pb, row));
  CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mfa: quarter-turn equivariance is exact, pi/4 within tolerance") {
  FeatureNetConfig cfg = tiny_config();
  cfg.rotation_count = 8;
  cfg.input_side = 64;
  nn::ParamSet ps;
  Rng init(8);
  FeatureNet net(ps, init, cfg);

  Rng rng(9);
  const BevImage img = random_bev(rng, cfg.input_side);
  const Mat row = FeatureNet::flatten_image(img);

  nn::Tape t(false);
  nn::ParamBinding pb(t, ps, false);
  const Mat base = t.val(net.mfa_forward(t, pb, row));
  const int fs = cfg.feature_side();

  for (int k : {4, 2, 1}) {  // pi, pi/2, pi/4
    const double r = 2.0 * M_PI * k / 8.0;
    const Mat rotated_in = rotate_image_channels(row, cfg.input_side, r);
    nn::Tape t2(false);
    nn::ParamBinding pb2(t2, ps, false);
    const Mat rotated_out = t2.val(net.mfa_forward(t2, pb2, rotated_in));
    const Mat expected = rotate_image_channels(base, fs, r);
    const double err = central_disk_maxabs(rotated_out, expected, fs, 0.7);
    if (k == 4) {
      CHECK(err < 1e-5);  // exact permutation path
    } else {
      CHECK(err < 5e-2);
    }
  }
}

TEST_CASE("vit: token shape contract at the full-size feature map") {
  // 32x32x128 features with 4x4 patches -> 64 tokens
  FeatureNetConfig cfg;
  cfg.rotation_count = 1;
  cfg.input_side = 128;
  cfg.backbone_widths = {4, 4, 4, 128};
  cfg.vit_dim = 32;
  cfg.vit_depth = 1;
  cfg.vit_heads = 2;
  cfg.output_dim = 16;
  REQUIRE(cfg.feature_side() == 32);
  REQUIRE(cfg.token_count() == 64);

  nn::ParamSet ps;
  Rng init(10);
  FeatureNet net(ps, init, cfg);
  Rng rng(11);
  const Mat fmap = random_mat(rng, 128, 32 * 32);

  nn::Tape t(false);
  nn::ParamBinding pb(t, ps, false);
  const int tokens = net.tokenize(t, pb, t.leaf(fmap));
  CHECK(t.val(tokens).rows() == 64);
  CHECK(t.val(tokens).cols() == 32);
  const int vit = net.vit_forward(t, pb, tokens);
  CHECK(t.val(vit).rows() == 64);
  CHECK(t.val(vit).cols() == 32);
  const int head = net.global_head(t, pb, vit);
  CHECK(t.val(head).rows() == 1);
  CHECK(t.val(head).cols() == 16);
  CHECK(t.val(head).allFinite());
}

TEST_CASE("vit: zero input with bias-free stem gives zero pre-encoder tokens") {
  FeatureNetConfig cfg = tiny_config();
  nn::ParamSet ps;
  Rng init(12);
  FeatureNet net(ps, init, cfg);
  zero_params_matching(ps, ".b");
  zero_params_matching(ps, ".beta");

  nn::Tape t(false);
  nn::ParamBinding pb(t, ps, false);
  const Mat zero_map = Mat::Zero(cfg.mfa_channels(), cfg.feature_side() * cfg.feature_side());
  const Mat tokens = t.val(net.tokenize(t, pb, t.leaf(zero_map)));
  CHECK(tokens.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("vit: swapping patch contents permutes pre-positional tokens") {
  FeatureNetConfig cfg = tiny_config();  // feature side 8, patch 4 -> 2x2 tokens
  nn::ParamSet ps;
  Rng init(13);
  FeatureNet net(ps, init, cfg);

  const int fs = cfg.feature_side();
  Rng rng(14);
  // content only in the central 2x2 of two patches; the conv stem's
  // receptive field then cannot leak across patch boundaries
  Mat a = Mat::Zero(cfg.mfa_channels(), fs * fs);
  auto fill_center = [&](Mat& m, int pi, int pj, Rng& source) {
    for (int di = 1; di <= 2; ++di) {
      for (int dj = 1; dj <= 2; ++dj) {
        const int px = (pi * 4 + di) * fs + (pj * 4 + dj);
        for (int ch = 0; ch < cfg.mfa_channels(); ++ch) m(ch, px) = source.normal();
      }
    }
  };
  Rng contentA(20), contentB(21);
  fill_center(a, 0, 0, contentA);
  fill_center(a, 1, 1, contentB);
  Mat b = Mat::Zero(cfg.mfa_channels(), fs * fs);
  Rng contentA2(20), contentB2(21);
  fill_center(b, 1, 1, contentA2);
  fill_center(b, 0, 0, contentB2);

  nn::Tape t(false);
  nn::ParamBinding pb(t, ps, false);
  const Mat ta = t.val(net.tokenize(t, pb, t.leaf(a)));
  const Mat tb = t.val(net.tokenize(t, pb, t.leaf(b)));
  // tokens are row-major over the 2x2 grid: 0 <-> 3 swapped, 1 and 2 fixed
  CHECK((ta.row(0) - tb.row(3)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ta.row(3) - tb.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ta.row(1) - tb.row(1)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ta.row(2) - tb.row(2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("global head: gate limits and loop oracle") {
  FeatureNetConfig cfg = tiny_config();
  nn::ParamSet ps;
  Rng init(15);
  FeatureNet net(ps, init, cfg);

  Rng rng(16);
  const int m = cfg.token_count();
  const Mat tokens = random_mat(rng, m, cfg.vit_dim);

  // gate off: output = plain token mean
  ps["head.gate.w"].setZero();
  ps["head.gate.b"].setConstant(-40.0);
  {
    nn::Tape t(false);
    nn::ParamBinding pb(t, ps, false);
    const Mat pooled = t.val(net.gated_pool(t, pb, t.leaf(tokens)));
    const Mat mean = tokens.colwise().mean();
    CHECK((pooled - mean).cwiseAbs().maxCoeff() < 1e-9);
  }
  // gate fully open: output = 2 x token mean
  ps["head.gate.b"].setConstant(40.0);
  {
    nn::Tape t(false);
    nn::ParamBinding pb(t, ps, false);
    const Mat pooled = t.val(net.gated_pool(t, pb, t.leaf(tokens)));
    const Mat mean = tokens.colwise().mean();
    CHECK((pooled - 2.0 * mean).cwiseAbs().maxCoeff() < 1e-9);
  }

  // random gate weights: scalar token-by-token oracle
  Rng grng(17);
  ps["head.gate.w"] = random_mat(grng, cfg.vit_dim, 1);
  ps["head.gate.b"] = random_mat(grng, 1, 1);
  {
    nn::Tape t(false);
    nn::ParamBinding pb(t, ps, false);
    const Mat got = t.val(net.global_head(t, pb, t.leaf(tokens)));

    Eigen::VectorXd pooled = Eigen::VectorXd::Zero(cfg.vit_dim);
    for (int i = 0; i < m; ++i) {
      double z = ps["head.gate.b"](0, 0);
      for (int d = 0; d < cfg.vit_dim; ++d) z += tokens(i, d) * ps["head.gate.w"](d, 0);
      const double w = 1.0 / (1.0 + std::exp(-z));
      for (int d = 0; d < cfg.vit_dim; ++d) pooled(d) += (tokens(i, d) + w * tokens(i, d)) / m;
    }
    Eigen::RowVectorXd expect = Eigen::RowVectorXd::Zero(cfg.output_dim);
    for (int o = 0; o < cfg.output_dim; ++o) {
      double z = ps["head.proj.b"](0, o);
      for (int d = 0; d < cfg.vit_dim; ++d) z += pooled(d) * ps["head.proj.w"](d, o);
      expect(o) = z;
    }
    CHECK((got.row(0) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("feature net: gate values stay inside (0,1) and outputs are finite") {
  FeatureNetConfig cfg = tiny_config();
  nn::ParamSet ps;
  Rng init(18);
  FeatureNet net(ps, init, cfg);
  Rng rng(19);
  for (int trial = 0; trial < 3; ++trial) {
    const BevImage img = random_bev(rng, cfg.input_side);
    nn::Tape t(false);
    nn::ParamBinding pb(t, ps, false);
    const Mat out = t.val(net.forward(t, pb, img));
    CHECK(out.allFinite());
    CHECK(out.cols() == cfg.output_dim);
  }
}

TEST_CASE("feature net: full-path gradient check on a tiny configuration") {
  FeatureNetConfig cfg = tiny_config();
  nn::ParamSet ps;
  Rng init(20);
  FeatureNet net(ps, init, cfg);
  Rng rng(21);
  const BevImage img = random_bev(rng, cfg.input_side);

  const double err = testutil::check_param_grads(
      ps,
      [&](nn::Tape& t, nn::ParamBinding& pb) {
        return t.mean_all(t.abs(net.forward(t, pb, img)));
      },
      3, 1e-4, 77);
  CHECK(err < 1e-4);
}
