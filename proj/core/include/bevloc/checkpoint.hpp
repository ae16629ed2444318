#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bevloc/model.hpp"

namespace bevloc {

struct CheckpointMeta {
  std::vector<double> loss_history;
  std::uint64_t train_seed = 0;
  int epochs_completed = 0;
};

/// Versioned binary container (.bvdl): magic, format version, a JSON block
/// with every config plus normalizer/schedule/meta, then the named
/// parameter tensors. Loading rebuilds the model from the stored configs
/// and rejects unknown versions, truncated files, and tensors whose shape
/// disagrees with the architecture, naming the offending tensor.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bevloc
