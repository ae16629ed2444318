#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bevloc/nn/adamw.hpp"
#include "bevloc/nn/tape.hpp"
#include "test_util.hpp"

using namespace bevloc;
using nn::Mat;
using testutil::check_param_grads;
using testutil::random_mat;

namespace {

/// Registers a random "input" tensor as a parameter so the generic checker
/// exercises both weight and activation gradients.
int add_input(nn::ParamSet& ps, Rng& rng, const std::string& name, int rows, int cols) {
  Rng r2(rng.next_u64());
  return ps.add(name, rows, cols, 1.0, r2);
}

}  // namespace

TEST_CASE("tape: elementwise and broadcast gradients") {
  Rng rng(7);
  nn::ParamSet ps;
  const int a = add_input(ps, rng, "a", 4, 5);
  const int b = add_input(ps, rng, "b", 4, 5);
  const int row = add_input(ps, rng, "row", 1, 5);
  const int col = add_input(ps, rng, "col", 4, 1);

  const double err = check_param_grads(ps, [&](nn::Tape& t, nn::ParamBinding& pb) {
    int x = t.mul(pb.node(a), pb.node(b));
    x = t.add(x, t.scale(pb.node(a), 0.7));
    x = t.sub(x, pb.node(b));
    x = t.add_row(x, pb.node(row));
    x = t.mul_col(x, pb.node(col));
    x = t.gelu(x);
    x = t.sigmoid(x);
    x = t.abs(x);
    return t.mean_all(x);
  });
  CHECK(err < 1e-7);
}

TEST_CASE("tape: matmul / transpose / softmax / slices") {
  Rng rng(8);
  nn::ParamSet ps;
  const int a = add_input(ps, rng, "a", 5, 6);
  const int b = add_input(ps, rng, "b", 6, 7);

  const double err = check_param_grads(ps, [&](nn::Tape& t, nn::ParamBinding& pb) {
    int x = t.matmul(pb.node(a), pb.node(b));       // [5,7]
    int y = t.softmax_rows(t.slice_cols(x, 1, 4));  // [5,4]
    int z = t.transpose(t.slice_rows(x, 0, 3));     // [7,3]
    int zz = t.concat_cols({y, t.slice_cols(x, 0, 3)});  // [5,7]
    int top = t.concat_rows({t.mean_rows(zz), t.mean_rows(t.transpose(z))});  // [2,7]
    return t.mean_all(top);
  });
  CHECK(err < 1e-7);
}

TEST_CASE("tape: normalization gradients") {
  Rng rng(9);
  nn::ParamSet ps;
  const int x = add_input(ps, rng, "x", 6, 10);
  const int gamma = ps.add_constant("gamma", 1, 10, 1.0);
  const int beta = ps.add_constant("beta", 1, 10, 0.0);
  const int ggamma = ps.add_constant("ggamma", 6, 1, 1.0);
  const int gbeta = ps.add_constant("gbeta", 6, 1, 0.0);

  const double err = check_param_grads(ps, [&](nn::Tape& t, nn::ParamBinding& pb) {
    const int ln = t.layer_norm(pb.node(x), pb.node(gamma), pb.node(beta));
    const int gn = t.group_norm(pb.node(x), pb.node(ggamma), pb.node(gbeta), 3);
    return t.mean_all(t.add(t.gelu(ln), t.sigmoid(gn)));
  });
  CHECK(err < 1e-7);
}

TEST_CASE("tape: conv2d gradients (stride 1 and 2)") {
  Rng rng(10);
  nn::ParamSet ps;
  const int x = add_input(ps, rng, "x", 3, 8 * 8);
  const int w1 = add_input(ps, rng, "w1", 4, 3 * 9);
  const int b1 = add_input(ps, rng, "b1", 1, 4);
  const int w2 = add_input(ps, rng, "w2", 5, 4 * 9);
  const int w3 = add_input(ps, rng, "w3", 6, 5);  // 1x1

  const double err = check_param_grads(ps, [&](nn::Tape& t, nn::ParamBinding& pb) {
    const nn::ConvSpec s1{3, 4, 3, 1, 1, 8, 8};
    int y = t.conv2d(pb.node(x), pb.node(w1), pb.node(b1), s1);
    y = t.gelu(y);
    const nn::ConvSpec s2{4, 5, 3, 2, 1, 8, 8};
    y = t.conv2d(y, pb.node(w2), -1, s2);
    y = t.gelu(y);
    const nn::ConvSpec s3{5, 6, 1, 1, 0, 4, 4};
    y = t.conv2d(y, pb.node(w3), -1, s3);
    return t.mean_all(y);
  });
  CHECK(err < 1e-7);
}

TEST_CASE("tape: rotation and branch-max gradients") {
  Rng rng(11);
  nn::ParamSet ps;
  const int x = add_input(ps, rng, "x", 2, 9 * 9);
  const auto tab = nn::make_rotate_table(9, 9, 0.63);
  const auto tab2 = nn::make_rotate_table(9, 9, -1.1);

  const double err = check_param_grads(ps, [&](nn::Tape& t, nn::ParamBinding& pb) {
    const int a = t.rotate(pb.node(x), tab);
    const int b = t.rotate(pb.node(x), tab2);
    const int c = t.scale(pb.node(x), 0.9);
    return t.mean_all(t.maximum({a, b, c}));
  });
  CHECK(err < 1e-7);
}

TEST_CASE("tape: transformer block gradients") {
  Rng rng(12);
  nn::ParamSet ps;
  Rng init(99);
  const auto blk = nn::TransformerBlock::make(ps, init, "blk", 8, 2, 2);
  const int x = add_input(ps, rng, "x", 5, 8);

  const double err = check_param_grads(ps, [&](nn::Tape& t, nn::ParamBinding& pb) {
    return t.mean_all(t.abs(blk.forward(t, pb, pb.node(x))));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("tape: reshape round trip and maximum tie-breaking") {
  nn::Tape t(true);
  Mat v(2, 3);
  v << 1, 2, 3, 4, 5, 6;
  const int a = t.leaf(v, true);
  const int r = t.reshape(a, 3, 2);
  CHECK(t.val(r)(0, 0) == 1);
  CHECK(t.val(r)(0, 1) == 2);  // row-major reinterpretation
  CHECK(t.val(r)(1, 0) == 3);
  CHECK(t.val(r)(2, 1) == 6);

  const int b = t.leaf(v, true);
  const int m = t.maximum({a, b});  // tie -> gradient goes to the first
  t.backward(t.mean_all(m));
  CHECK(t.grad(a).sum() == doctest::Approx(1.0));
  CHECK_THROWS_AS(t.grad(b), std::logic_error);
}

TEST_CASE("adamw: decoupled decay shrinks an unused-gradient parameter") {
  nn::ParamSet ps;
  Rng rng(5);
  ps.add("w", 2, 2, 1.0, rng);
  const Mat before = ps.value(0);
  nn::AdamW opt(ps, {.weight_decay = 0.1});
  std::vector<Mat> grads(1);
  grads[0] = Mat::Zero(2, 2);
  opt.step(grads, 1e-2);
  // zero gradient, so the update is pure decay: p *= (1 - lr*wd)
  CHECK(ps.value(0).isApprox(before * (1.0 - 1e-2 * 0.1), 1e-12));
}

TEST_CASE("lr schedule: warmup peak and terminal zero") {
  const long total = 1000, warmup = 100;
  const double peak = 5e-4;
  CHECK(nn::lr_cosine_warmup(0, total, warmup, peak) == doctest::Approx(peak / 100));
  CHECK(nn::lr_cosine_warmup(warmup - 1, total, warmup, peak) == peak);
  CHECK(nn::lr_cosine_warmup(total - 1, total, warmup, peak) < 1e-6 * peak);
  // monotone decay after warmup
  double prev = peak;
  for (long s = warmup; s < total; s += 50) {
    const double lr = nn::lr_cosine_warmup(s, total, warmup, peak);
    CHECK(lr <= prev + 1e-15);
    prev = lr;
  }
}

TEST_CASE("rotate tables: quarter turns are exact permutations") {
  Rng rng(3);
  const Mat x = random_mat(rng, 3, 8 * 8);
  for (double a : {M_PI, M_PI / 2, -M_PI / 2}) {
    const auto tab = nn::make_rotate_table(8, 8, a);
    for (const auto& w : tab.wgt) {
      const double total = w[0] + w[1] + w[2] + w[3];
      CHECK(total == 1.0);  // every output pixel maps to exactly one source
    }
    const Mat y = nn::rotate_channels(x, tab);
    const auto back = nn::make_rotate_table(8, 8, -a);
    CHECK((nn::rotate_channels(y, back) - x).cwiseAbs().maxCoeff() == 0.0);
  }
}
