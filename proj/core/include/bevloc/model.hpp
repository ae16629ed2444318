#pragma once

#include <memory>

#include "bevloc/diffusion.hpp"
#include "bevloc/feature_net.hpp"
#include "bevloc/normalizer.hpp"

namespace bevloc {

struct ModelConfig {
  FeatureNetConfig fnet;
  DenoiserConfig denoiser;
  int diffusion_steps = 100;  // K
  ScheduleKind schedule_kind = ScheduleKind::kCosine;

  void validate() const;
};

/// Parameters plus the two networks and everything inference needs
/// (schedule, pose normalizer). Construction is deterministic per seed.
struct Model {
  ModelConfig cfg;
  std::uint64_t init_seed = 0;
  nn::ParamSet params;
  std::unique_ptr<FeatureNet> fnet;
  std::unique_ptr<Denoiser> denoiser;
  NoiseSchedule schedule;
  PoseNormalizer normalizer;

  Model(ModelConfig config, std::uint64_t seed);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
};

/// Canonical configuration (full-size networks, 128 px BEV).
ModelConfig paper_model_config();
/// Small configuration for CPU-scale experiments (64 px BEV, fewer
/// rotations, thinner towers). Pair with desk_bev_config().
ModelConfig desk_model_config();

BevConfig paper_bev_config();
BevConfig desk_bev_config();

}  // namespace bevloc
