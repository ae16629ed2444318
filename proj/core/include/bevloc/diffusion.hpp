#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bevloc/nn/layers.hpp"
#include "bevloc/normalizer.hpp"

namespace bevloc {

/// Variance schedule of the forward corruption process. alpha_bar has K+1
/// entries with alpha_bar[0] = 1 by convention.
struct NoiseSchedule {
  int steps = 0;  // K
  Eigen::ArrayXd beta;       // [K], beta[k-1] is the step-k variance
  Eigen::ArrayXd alpha;      // [K], 1 - beta
  Eigen::ArrayXd alpha_bar;  // [K+1], cumulative product, alpha_bar[0] = 1

  double abar(int k) const { return alpha_bar(k); }
  void validate() const;
};

enum class ScheduleKind { kCosine, kLinear };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

/// cosine: abar(k) = cos^2(((k/K + s)/(1 + s)) * pi/2) / cos^2(s/(1+s) * pi/2),
/// s = 0.008, per-step beta clipped to <= 0.999.
/// linear: beta spaced from 1e-4*(1000/K) to 0.02*(1000/K); small K makes the
/// end of the ramp exceed 1, which fails validation (use K >= ~50).
NoiseSchedule build_schedule(int K, ScheduleKind kind);

/// t_k = sqrt(abar_k) t_0 + sqrt(1 - abar_k) eps, rows = frames, cols = 4.
/// Requires 1 <= k <= K.
nn::Mat add_noise(const nn::Mat& t0, int k, const nn::Mat& eps, const NoiseSchedule& s);

/// Interleaved sinusoidal embedding (sin(k w_i), cos(k w_i), ...) with
/// w_i = 10000^(-2i/dim). dim must be even.
Eigen::RowVectorXd step_embedding(int k, int dim);

struct DenoiserConfig {
  int layers = 8;
  int heads = 4;
  int latent_dim = 512;
  int seq_len = 3;          // N, frames per tuple
  int step_embed_dim = 128;
  int mlp_ratio = 4;
  int feat_dim = 512;       // conditioning width from the feature net

  void validate() const;
};

/// Transformer noise predictor: per-frame tokens are linear projections of
/// (noisy pose, step embedding, frame feature), plus a learned frame
/// position embedding; a bidirectional encoder emits per-frame eps-hat.
class Denoiser {
 public:
  Denoiser(nn::ParamSet& ps, Rng& rng, const DenoiserConfig& cfg);

  const DenoiserConfig& config() const { return cfg_; }

  /// noisy [N,4], feats [N, feat_dim] -> eps-hat [N,4].
  int forward(nn::Tape& t, nn::ParamBinding& pb, int noisy, int k, int feats) const;

  /// Inference convenience: runs forward on a gradient-free tape.
  nn::Mat predict(const nn::ParamSet& ps, const nn::Mat& noisy, int k,
                  const nn::Mat& feats) const;

 private:
  DenoiserConfig cfg_;
  nn::Linear in_proj_;
  int pos_emb_ = -1;
  std::vector<nn::TransformerBlock> encoder_;
  nn::LayerNorm final_norm_;
  nn::Linear out_head_;
};

/// Deterministic DDIM update (eta = 0) from step k to k_prev < k:
///   t_prev = sqrt(abar_prev) * (t_k - sqrt(1-abar_k) eps) / sqrt(abar_k)
///          + sqrt(1-abar_prev) * eps
/// Requires 0 <= k_prev < k <= K.
nn::Mat ddim_step(const nn::Mat& t_k, const nn::Mat& eps_hat, int k, int k_prev,
                  const NoiseSchedule& s);

/// Uniformly strided step sequence K -> 0 with `steps` updates, e.g.
/// K=100, steps=10 -> {100, 90, ..., 10, 0}. Requires 1 <= steps <= K.
std::vector<int> ddim_step_sequence(int K, int steps);

using EpsPredictor = std::function<nn::Mat(const nn::Mat& noisy, int k)>;

/// Starts from seeded N(0, I) and applies ddim_step along the strided
/// sequence; returns the final normalized pose sequence [N,4].
nn::Mat ddim_sample(const EpsPredictor& eps_fn, int seq_len, int steps,
                    const NoiseSchedule& s, std::uint64_t seed);

/// Mean absolute error over all frames and coordinates.
double epsilon_loss(const nn::Mat& eps_hat, const nn::Mat& eps);

/// Autograd path of the same loss.
int epsilon_loss_node(nn::Tape& t, int eps_hat, int eps_target);

}  // namespace bevloc
