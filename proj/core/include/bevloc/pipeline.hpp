#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "bevloc/augment.hpp"
#include "bevloc/dataset.hpp"
#include "bevloc/model.hpp"

namespace bevloc {

struct TrainConfig {
  int epochs = 150;
  int batch_size = 16;
  int warmup_epochs = 5;
  double peak_lr = 5e-4;
  double weight_decay = 1e-2;
  int tuple_len = 3;     // N, frames per training tuple
  int tuple_spacing = 2; // frames between tuple members
  std::uint64_t seed = 0;
  int workers = 0;       // 0 = hardware concurrency; 1 = bit-deterministic
  int checkpoint_every = 1;  // epochs; 0 disables periodic saving

  void validate() const;
};

/// Frame-index tuple; the anchor (last) frame is the evaluation target.
struct SequenceSample {
  std::vector<int> frame_indices;
  int anchor() const { return frame_indices.back(); }
};

/// Sliding tuples (i - (N-1)*s, ..., i - s, i) for every anchor i with a
/// full history. Throws when the sequence is too short for even one tuple.
std::vector<SequenceSample> make_tuples(int frame_count, int n, int spacing);

struct PerFrameRecord {
  std::int64_t frame_id = 0;
  Pose2 truth;
  Pose2 pred;
  double e_t = 0.0;      // meters
  double e_y_deg = 0.0;  // degrees, wrap-corrected
  bool success = false;
};

struct EvalReport {
  double e_t = 0.0;           // mean position error [m]
  double e_y_deg = 0.0;       // mean yaw error [deg]
  double sr_percent = 0.0;    // e_t < sr_trans AND e_y < sr_yaw (strict)
  double median_e_t = 0.0;
  double median_e_y_deg = 0.0;
  double mean_hz = 0.0;
  int ddim_steps = 0;
  double sr_trans = 2.0;
  double sr_yaw_deg = 5.0;
  std::vector<PerFrameRecord> frames;
};

/// Fills e_t/e_y/success per record and the aggregate statistics. Success
/// uses strict inequalities on both thresholds.
EvalReport compute_metrics(std::vector<PerFrameRecord> records, double sr_trans,
                           double sr_yaw_deg);

struct TrainResult {
  std::vector<double> epoch_losses;
  long steps = 0;
};

/// Full training loop: per-frame virtual-view augmentation, shared
/// diffusion step per tuple, L1 noise loss, AdamW with linear warmup and
/// cosine decay. Fits the model's pose normalizer from the training poses.
/// Writes a checkpoint after every checkpoint_every epochs when
/// checkpoint_path is non-empty. Aborts with a diagnostic snapshot on a
/// non-finite loss.
TrainResult train(const std::vector<FrameRecord>& frames, Model& model, const TrainConfig& cfg,
                  const AugmentConfig& aug_cfg, const BevConfig& bev_cfg,
                  const std::filesystem::path& checkpoint_path, std::ostream* log = nullptr);

/// Per-anchor inference: feature extraction over the tuple, seeded DDIM
/// sampling with `steps` updates, decode of the anchor pose. Deterministic
/// per seed (timing aside).
EvalReport evaluate(const std::vector<FrameRecord>& frames, const Model& model,
                    const BevConfig& bev_cfg, int steps, std::uint64_t seed,
                    double sr_trans = 2.0, double sr_yaw_deg = 5.0, int workers = 0,
                    int tuple_len = -1, int tuple_spacing = 2);

void write_report_json(const std::filesystem::path& path, const EvalReport& r);
void write_per_frame_csv(const std::filesystem::path& path, const EvalReport& r);

}  // namespace bevloc
