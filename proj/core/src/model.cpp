#include "bevloc/model.hpp"

#include <stdexcept>

namespace bevloc {

void ModelConfig::validate() const {
  fnet.validate();
  denoiser.validate();
  if (fnet.output_dim != denoiser.feat_dim) {
    throw std::invalid_argument("ModelConfig: feature output_dim must equal denoiser feat_dim");
  }
  if (diffusion_steps < 2) throw std::invalid_argument("ModelConfig: diffusion_steps >= 2");
}

Model::Model(ModelConfig config, std::uint64_t seed) : cfg(std::move(config)), init_seed(seed) {
  cfg.validate();
  Rng rng(mix_seed({seed, 0x1217ULL}));
  fnet = std::make_unique<FeatureNet>(params, rng, cfg.fnet);
  denoiser = std::make_unique<Denoiser>(params, rng, cfg.denoiser);
  schedule = build_schedule(cfg.diffusion_steps, cfg.schedule_kind);
}

ModelConfig paper_model_config() { return ModelConfig{}; }

ModelConfig desk_model_config() {
  ModelConfig m;
  m.fnet.rotation_count = 4;
  m.fnet.input_side = 64;
  m.fnet.backbone_widths = {16, 32, 64, 64};
  m.fnet.vit_dim = 128;
  m.fnet.vit_depth = 3;
  m.fnet.vit_heads = 4;
  m.fnet.output_dim = 256;
  m.denoiser.layers = 4;
  m.denoiser.latent_dim = 256;
  m.denoiser.step_embed_dim = 64;
  m.denoiser.feat_dim = 256;
  return m;
}

BevConfig paper_bev_config() { return BevConfig{}; }

BevConfig desk_bev_config() {
  BevConfig b;
  b.half_window = 25.0;
  b.grid_resolution = 0.8;  // 62 px raster, padded to 64
  b.output_side = 64;
  return b;
}

}  // namespace bevloc
