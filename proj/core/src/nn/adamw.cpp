#include "bevloc/nn/adamw.hpp"

#include <cmath>

namespace bevloc::nn {

void AdamW::step(const std::vector<Mat>& grads, double lr) {
  if (m_.empty()) {
    m_.resize(params_->size());
    v_.resize(params_->size());
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (int i = 0; i < params_->size(); ++i) {
    if (i >= static_cast<int>(grads.size()) || grads[i].size() == 0) continue;
    Mat& p = params_->value(i);
    if (m_[i].size() == 0) {
      m_[i] = Mat::Zero(p.rows(), p.cols());
      v_[i] = Mat::Zero(p.rows(), p.cols());
    }
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
    const Mat mhat = m_[i] / bc1;
    const Mat vhat = v_[i] / bc2;
    p.array() -= lr * (mhat.array() / (vhat.array().sqrt() + cfg_.eps) +
                       cfg_.weight_decay * p.array());
  }
}

double lr_cosine_warmup(long step, long total_steps, long warmup_steps, double peak) {
  if (warmup_steps > 0 && step < warmup_steps) {
    return peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const long denom = total_steps - warmup_steps;
  if (denom <= 0) return peak;
  const double progress = static_cast<double>(step + 1 - warmup_steps) / static_cast<double>(denom);
  return peak * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace bevloc::nn
