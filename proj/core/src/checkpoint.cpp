#include "bevloc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace bevloc {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'B', 'V', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

json fnet_to_json(const FeatureNetConfig& c) {
  return json{{"rotation_count", c.rotation_count},
              {"input_side", c.input_side},
              {"backbone_widths", c.backbone_widths},
              {"patch", c.patch},
              {"vit_dim", c.vit_dim},
              {"vit_depth", c.vit_depth},
              {"vit_heads", c.vit_heads},
              {"vit_mlp_ratio", c.vit_mlp_ratio},
              {"output_dim", c.output_dim}};
}

FeatureNetConfig fnet_from_json(const json& j) {
  FeatureNetConfig c;
  c.rotation_count = j.at("rotation_count");
  c.input_side = j.at("input_side");
  c.backbone_widths = j.at("backbone_widths");
  c.patch = j.at("patch");
  c.vit_dim = j.at("vit_dim");
  c.vit_depth = j.at("vit_depth");
  c.vit_heads = j.at("vit_heads");
  c.vit_mlp_ratio = j.at("vit_mlp_ratio");
  c.output_dim = j.at("output_dim");
  return c;
}

json denoiser_to_json(const DenoiserConfig& c) {
  return json{{"layers", c.layers},         {"heads", c.heads},
              {"latent_dim", c.latent_dim}, {"seq_len", c.seq_len},
              {"step_embed_dim", c.step_embed_dim}, {"mlp_ratio", c.mlp_ratio},
              {"feat_dim", c.feat_dim}};
}

DenoiserConfig denoiser_from_json(const json& j) {
  DenoiserConfig c;
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.latent_dim = j.at("latent_dim");
  c.seq_len = j.at("seq_len");
  c.step_embed_dim = j.at("step_embed_dim");
  c.mlp_ratio = j.at("mlp_ratio");
  c.feat_dim = j.at("feat_dim");
  return c;
}

template <typename T>
void write_raw(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::ifstream& f, T& v, const char* what) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error(std::string("checkpoint: truncated while reading ") + what);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const CheckpointMeta& meta) {
  json j{{"model",
          {{"fnet", fnet_to_json(model.cfg.fnet)},
           {"denoiser", denoiser_to_json(model.cfg.denoiser)},
           {"diffusion_steps", model.cfg.diffusion_steps},
           {"schedule_kind", to_string(model.cfg.schedule_kind)}}},
         {"init_seed", model.init_seed},
         {"normalizer",
          {{"x_lo", model.normalizer.x_lo},
           {"x_hi", model.normalizer.x_hi},
           {"y_lo", model.normalizer.y_lo},
           {"y_hi", model.normalizer.y_hi}}},
         {"meta",
          {{"loss_history", meta.loss_history},
           {"train_seed", meta.train_seed},
           {"epochs_completed", meta.epochs_completed}}}};
  const std::string js = j.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  f.write(kMagic, 4);
  write_raw(f, kVersion);
  write_raw(f, static_cast<std::uint64_t>(js.size()));
  f.write(js.data(), static_cast<std::streamsize>(js.size()));
  write_raw(f, static_cast<std::uint64_t>(model.params.size()));
  for (int i = 0; i < model.params.size(); ++i) {
    const std::string& name = model.params.name(i);
    const nn::Mat& v = model.params.value(i);
    write_raw(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw(f, static_cast<std::uint32_t>(v.rows()));
    write_raw(f, static_cast<std::uint32_t>(v.cols()));
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
  }
  if (!f) throw std::runtime_error("save_checkpoint: short write to " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path.string());

  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("load_checkpoint: not a checkpoint file (bad magic)");
  }
  std::uint32_t version = 0;
  read_raw(f, version, "version");
  if (version != kVersion) {
    throw std::runtime_error("load_checkpoint: unsupported format version " +
                             std::to_string(version));
  }
  std::uint64_t json_len = 0;
  read_raw(f, json_len, "config length");
  std::string js(json_len, '\0');
  f.read(js.data(), static_cast<std::streamsize>(json_len));
  if (!f) throw std::runtime_error("checkpoint: truncated while reading config block");
  const json j = json::parse(js);

  ModelConfig cfg;
  cfg.fnet = fnet_from_json(j.at("model").at("fnet"));
  cfg.denoiser = denoiser_from_json(j.at("model").at("denoiser"));
  cfg.diffusion_steps = j.at("model").at("diffusion_steps");
  cfg.schedule_kind = schedule_kind_from_string(j.at("model").at("schedule_kind"));

  LoadedCheckpoint out{Model(cfg, j.at("init_seed").get<std::uint64_t>()), {}};
  out.model.normalizer.x_lo = j.at("normalizer").at("x_lo");
  out.model.normalizer.x_hi = j.at("normalizer").at("x_hi");
  out.model.normalizer.y_lo = j.at("normalizer").at("y_lo");
  out.model.normalizer.y_hi = j.at("normalizer").at("y_hi");
  out.meta.loss_history = j.at("meta").at("loss_history").get<std::vector<double>>();
  out.meta.train_seed = j.at("meta").at("train_seed");
  out.meta.epochs_completed = j.at("meta").at("epochs_completed");

  std::uint64_t n_tensors = 0;
  read_raw(f, n_tensors, "tensor count");
  if (n_tensors != static_cast<std::uint64_t>(out.model.params.size())) {
    throw std::runtime_error("load_checkpoint: tensor count " + std::to_string(n_tensors) +
                             " does not match architecture (" +
                             std::to_string(out.model.params.size()) + ")");
  }
  std::vector<bool> filled(out.model.params.size(), false);
  for (std::uint64_t t = 0; t < n_tensors; ++t) {
    std::uint32_t name_len = 0;
    read_raw(f, name_len, "tensor name length");
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (!f) throw std::runtime_error("checkpoint: truncated while reading tensor name");
    std::uint32_t rows = 0, cols = 0;
    read_raw(f, rows, "tensor rows");
    read_raw(f, cols, "tensor cols");
    const int idx = out.model.params.find(name);
    if (idx < 0) {
      throw std::runtime_error("load_checkpoint: tensor '" + name +
                               "' does not exist in this architecture");
    }
    nn::Mat& dst = out.model.params.value(idx);
    if (dst.rows() != static_cast<Eigen::Index>(rows) ||
        dst.cols() != static_cast<Eigen::Index>(cols)) {
      throw std::runtime_error("load_checkpoint: tensor '" + name + "' has shape [" +
                               std::to_string(rows) + "," + std::to_string(cols) +
                               "] but the architecture expects [" + std::to_string(dst.rows()) +
                               "," + std::to_string(dst.cols()) + "]");
    }
    f.read(reinterpret_cast<char*>(dst.data()),
           static_cast<std::streamsize>(sizeof(double) * dst.size()));
    if (!f) throw std::runtime_error("checkpoint: truncated while reading tensor '" + name + "'");
    filled[idx] = true;
  }
  for (int i = 0; i < out.model.params.size(); ++i) {
    if (!filled[i]) {
      throw std::runtime_error("load_checkpoint: tensor '" + out.model.params.name(i) +
                               "' missing from file");
    }
  }
  return out;
}

}  // namespace bevloc
