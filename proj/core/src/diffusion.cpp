#include "bevloc/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "bevloc/rng.hpp"

namespace bevloc {

using nn::Mat;

void NoiseSchedule::validate() const {
  if (steps < 2) throw std::invalid_argument("NoiseSchedule: need K >= 2");
  if (beta.size() != steps || alpha.size() != steps || alpha_bar.size() != steps + 1) {
    throw std::invalid_argument("NoiseSchedule: array sizes disagree with K");
  }
  if (alpha_bar(0) != 1.0) throw std::invalid_argument("NoiseSchedule: alpha_bar[0] must be 1");
  for (int k = 0; k < steps; ++k) {
    if (!(beta(k) > 0.0 && beta(k) < 1.0)) {
      throw std::invalid_argument("NoiseSchedule: beta[" + std::to_string(k + 1) +
                                  "] = " + std::to_string(beta(k)) + " outside (0, 1)");
    }
    if (!(alpha_bar(k + 1) < alpha_bar(k))) {
      throw std::invalid_argument("NoiseSchedule: alpha_bar must be strictly decreasing");
    }
    if (std::abs(alpha_bar(k + 1) - alpha_bar(k) * alpha(k)) > 1e-12) {
      throw std::invalid_argument("NoiseSchedule: alpha_bar inconsistent with cumulative product");
    }
  }
  if (!(alpha_bar(steps) < 0.05)) {
    throw std::invalid_argument("NoiseSchedule: alpha_bar[K] must end below 0.05");
  }
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "cosine") return ScheduleKind::kCosine;
  if (s == "linear") return ScheduleKind::kLinear;
  throw std::invalid_argument("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::kCosine ? "cosine" : "linear";
}

NoiseSchedule build_schedule(int K, ScheduleKind kind) {
  if (K < 2) throw std::invalid_argument("build_schedule: need K >= 2");
  NoiseSchedule s;
  s.steps = K;
  s.beta.resize(K);
  if (kind == ScheduleKind::kCosine) {
    const double off = 0.008;
    auto f = [&](double k) {
      const double a = (k / K + off) / (1.0 + off) * M_PI / 2.0;
      const double c = std::cos(a);
      return c * c;
    };
    const double f0 = f(0.0);
    double prev = 1.0;
    for (int k = 1; k <= K; ++k) {
      const double cur = f(static_cast<double>(k)) / f0;
      double beta = 1.0 - cur / prev;
      beta = std::min(std::max(beta, 1e-8), 0.999);
      s.beta(k - 1) = beta;
      prev = cur;
    }
  } else {
    const double scale = 1000.0 / K;
    const double b0 = 1e-4 * scale;
    const double b1 = 0.02 * scale;
    for (int k = 0; k < K; ++k) {
      s.beta(k) = b0 + (b1 - b0) * (K == 1 ? 0.0 : static_cast<double>(k) / (K - 1));
    }
  }
  s.alpha = 1.0 - s.beta;
  s.alpha_bar.resize(K + 1);
  s.alpha_bar(0) = 1.0;
  for (int k = 1; k <= K; ++k) s.alpha_bar(k) = s.alpha_bar(k - 1) * s.alpha(k - 1);
  s.validate();
  return s;
}

Mat add_noise(const Mat& t0, int k, const Mat& eps, const NoiseSchedule& s) {
  if (k < 1 || k > s.steps) throw std::invalid_argument("add_noise: k out of [1, K]");
  if (t0.rows() != eps.rows() || t0.cols() != eps.cols()) {
    throw std::invalid_argument("add_noise: t0/eps shape mismatch");
  }
  const double ab = s.abar(k);
  return std::sqrt(ab) * t0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::RowVectorXd step_embedding(int k, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("step_embedding: dim must be even");
  Eigen::RowVectorXd e(dim);
  for (int i = 0; i < dim / 2; ++i) {
    const double w = std::pow(10000.0, -2.0 * i / dim);
    e(2 * i) = std::sin(k * w);
    e(2 * i + 1) = std::cos(k * w);
  }
  return e;
}

void DenoiserConfig::validate() const {
  if (layers < 1 || heads < 1 || latent_dim < heads || seq_len < 1 || feat_dim < 1) {
    throw std::invalid_argument("DenoiserConfig: invalid sizes");
  }
  if (latent_dim % heads != 0) {
    throw std::invalid_argument("DenoiserConfig: latent_dim must be divisible by heads");
  }
  if (step_embed_dim <= 0 || step_embed_dim % 2 != 0) {
    throw std::invalid_argument("DenoiserConfig: step_embed_dim must be even");
  }
}

Denoiser::Denoiser(nn::ParamSet& ps, Rng& rng, const DenoiserConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  in_proj_ = nn::Linear::make(ps, rng, "denoiser.in_proj",
                              4 + cfg_.step_embed_dim + cfg_.feat_dim, cfg_.latent_dim);
  pos_emb_ = ps.add("denoiser.pos_emb", cfg_.seq_len, cfg_.latent_dim, 0.02, rng);
  encoder_.reserve(cfg_.layers);
  for (int i = 0; i < cfg_.layers; ++i) {
    encoder_.push_back(nn::TransformerBlock::make(ps, rng, "denoiser.block" + std::to_string(i),
                                                  cfg_.latent_dim, cfg_.heads, cfg_.mlp_ratio));
  }
  final_norm_ = nn::LayerNorm::make(ps, "denoiser.final_norm", cfg_.latent_dim);
  out_head_ = nn::Linear::make(ps, rng, "denoiser.out_head", cfg_.latent_dim, 4);
}

int Denoiser::forward(nn::Tape& t, nn::ParamBinding& pb, int noisy, int k, int feats) const {
  const Eigen::Index n = t.val(noisy).rows();
  if (n != cfg_.seq_len || t.val(noisy).cols() != 4) {
    throw std::invalid_argument("Denoiser::forward: noisy must be [seq_len, 4]");
  }
  if (t.val(feats).rows() != n || t.val(feats).cols() != cfg_.feat_dim) {
    throw std::invalid_argument("Denoiser::forward: feats must be [seq_len, feat_dim]");
  }
  Mat emb(n, cfg_.step_embed_dim);
  emb.rowwise() = step_embedding(k, cfg_.step_embed_dim);
  const int emb_leaf = t.leaf(std::move(emb));
  int x = in_proj_.forward(t, pb, t.concat_cols({noisy, emb_leaf, feats}));
  x = t.add(x, pb.node(pos_emb_));
  for (const auto& blk : encoder_) x = blk.forward(t, pb, x);
  x = final_norm_.forward(t, pb, x);
  return out_head_.forward(t, pb, x);
}

Mat Denoiser::predict(const nn::ParamSet& ps, const Mat& noisy, int k, const Mat& feats) const {
  nn::Tape t(false);
  nn::ParamBinding pb(t, ps, false);
  const int out = forward(t, pb, t.leaf(noisy), k, t.leaf(feats));
  return t.val(out);
}

Mat ddim_step(const Mat& t_k, const Mat& eps_hat, int k, int k_prev, const NoiseSchedule& s) {
  if (!(0 <= k_prev && k_prev < k && k <= s.steps)) {
    throw std::invalid_argument("ddim_step: need 0 <= k_prev < k <= K");
  }
  if (t_k.rows() != eps_hat.rows() || t_k.cols() != eps_hat.cols()) {
    throw std::invalid_argument("ddim_step: shape mismatch");
  }
  const double ab_k = s.abar(k);
  const double ab_p = s.abar(k_prev);
  const Mat t0_pred = (t_k - std::sqrt(1.0 - ab_k) * eps_hat) / std::sqrt(ab_k);
  return std::sqrt(ab_p) * t0_pred + std::sqrt(1.0 - ab_p) * eps_hat;
}

std::vector<int> ddim_step_sequence(int K, int steps) {
  if (steps < 1 || steps > K) throw std::invalid_argument("ddim_step_sequence: steps out of [1, K]");
  std::vector<int> ks;
  ks.reserve(steps + 1);
  for (int j = steps; j >= 0; --j) {
    ks.push_back(static_cast<int>(std::lround(static_cast<double>(K) * j / steps)));
  }
  for (std::size_t i = 1; i < ks.size(); ++i) {
    if (ks[i] >= ks[i - 1]) throw std::logic_error("ddim_step_sequence: stride collapsed");
  }
  return ks;
}

Mat ddim_sample(const EpsPredictor& eps_fn, int seq_len, int steps, const NoiseSchedule& s,
                std::uint64_t seed) {
  const auto ks = ddim_step_sequence(s.steps, steps);
  Rng rng(seed);
  Mat t(seq_len, 4);
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = rng.normal();
  }
  for (std::size_t i = 0; i + 1 < ks.size(); ++i) {
    const Mat eps = eps_fn(t, ks[i]);
    t = ddim_step(t, eps, ks[i], ks[i + 1], s);
  }
  return t;
}

double epsilon_loss(const Mat& eps_hat, const Mat& eps) {
  if (eps_hat.rows() != eps.rows() || eps_hat.cols() != eps.cols()) {
    throw std::invalid_argument("epsilon_loss: shape mismatch");
  }
  return (eps_hat - eps).cwiseAbs().mean();
}

int epsilon_loss_node(nn::Tape& t, int eps_hat, int eps_target) {
  if (t.val(eps_hat).rows() != t.val(eps_target).rows() ||
      t.val(eps_hat).cols() != t.val(eps_target).cols()) {
    throw std::invalid_argument("epsilon_loss_node: shape mismatch");
  }
  return t.mean_all(t.abs(t.sub(eps_hat, eps_target)));
}

}  // namespace bevloc
