#pragma once

#include <vector>

#include "bevloc/nn/layers.hpp"

namespace bevloc::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Adam with decoupled weight decay. Moment buffers are allocated per
/// parameter on the first step.
class AdamW {
 public:
  AdamW(ParamSet& params, AdamWConfig cfg) : params_(&params), cfg_(cfg) {}

  /// grads[i] may be empty when parameter i was untouched this step.
  void step(const std::vector<Mat>& grads, double lr);

  long step_count() const { return t_; }

 private:
  ParamSet* params_;
  AdamWConfig cfg_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

/// Linear warmup to peak over warmup_steps, then single-cycle cosine decay
/// to exactly 0 at the final step. step is 0-based; the last warmup step
/// (step == warmup_steps - 1) evaluates to peak exactly.
double lr_cosine_warmup(long step, long total_steps, long warmup_steps, double peak);

}  // namespace bevloc::nn
