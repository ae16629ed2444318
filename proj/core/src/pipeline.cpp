#include "bevloc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "bevloc/checkpoint.hpp"
#include "bevloc/nn/adamw.hpp"
#include "bevloc/rng.hpp"

namespace bevloc {

using nn::Mat;

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("TrainConfig: invalid sizes");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) {
    throw std::invalid_argument("TrainConfig: warmup_epochs must be < epochs");
  }
  if (tuple_len < 1 || tuple_spacing < 1) {
    throw std::invalid_argument("TrainConfig: tuple settings must be positive");
  }
  if (!(peak_lr > 0.0)) throw std::invalid_argument("TrainConfig: peak_lr must be > 0");
}

std::vector<SequenceSample> make_tuples(int frame_count, int n, int spacing) {
  if (n < 1 || spacing < 1) throw std::invalid_argument("make_tuples: n and spacing must be >= 1");
  const int span = (n - 1) * spacing;
  if (frame_count < span + 1) {
    throw std::invalid_argument("make_tuples: sequence shorter than one tuple span");
  }
  std::vector<SequenceSample> out;
  out.reserve(frame_count - span);
  for (int anchor = span; anchor < frame_count; ++anchor) {
    SequenceSample s;
    s.frame_indices.reserve(n);
    for (int j = n - 1; j >= 0; --j) s.frame_indices.push_back(anchor - j * spacing);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

int resolve_workers(int requested, int jobs) {
  int w = requested > 0 ? requested
                        : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return std::max(1, std::min(w, jobs));
}

/// Static contiguous split; worker w handles [w*n/W, (w+1)*n/W).
void run_chunked(int n, int workers, const std::function<void(int begin, int end)>& fn) {
  if (workers <= 1 || n <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int b = static_cast<int>(static_cast<long>(n) * w / workers);
    const int e = static_cast<int>(static_cast<long>(n) * (w + 1) / workers);
    pool.emplace_back([=, &fn] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
    m = 0.5 * (m + v[mid - 1]);
  }
  return m;
}

/// Stitched-map member indices for a frame: an M-wide window at interval S
/// centered on the frame, shifted (and the interval shrunk) near sequence
/// ends so it always stays in range.
std::vector<int> local_map_indices(int frame, int frame_count, int m, int s) {
  m = std::min(m, frame_count);
  if (m <= 1) return {frame};
  const int s_eff = std::max(1, std::min(s, (frame_count - 1) / (m - 1)));
  int start = frame - (m - 1) / 2 * s_eff;
  start = std::max(0, std::min(start, frame_count - 1 - (m - 1) * s_eff));
  std::vector<int> idx(m);
  for (int j = 0; j < m; ++j) idx[j] = start + j * s_eff;
  return idx;
}

struct TupleInput {
  std::vector<Mat> image_rows;  // flattened BEV per frame slot
  Mat t0;                       // [N,4] encoded labels
  Mat eps;                      // [N,4]
  int k = 1;
};

}  // namespace

TrainResult train(const std::vector<FrameRecord>& frames, Model& model, const TrainConfig& cfg,
                  const AugmentConfig& aug_cfg, const BevConfig& bev_cfg,
                  const std::filesystem::path& checkpoint_path, std::ostream* log) {
  cfg.validate();
  aug_cfg.validate();
  bev_cfg.validate();
  if (frames.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.tuple_len != model.cfg.denoiser.seq_len) {
    throw std::invalid_argument("train: tuple_len must equal the denoiser sequence length");
  }
  if (bev_cfg.output_side != model.cfg.fnet.input_side) {
    throw std::invalid_argument("train: BEV output_side must equal the feature net input side");
  }

  const int n_frames = static_cast<int>(frames.size());
  const auto tuples = make_tuples(n_frames, cfg.tuple_len, cfg.tuple_spacing);

  std::vector<Pose2> poses(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) poses[i] = frames[i].pose;
  model.normalizer = PoseNormalizer::fit(poses);

  // Raw-view BEV rows, shared across epochs.
  std::vector<Mat> raw_rows(frames.size());
  {
    const int workers = resolve_workers(cfg.workers, n_frames);
    run_chunked(n_frames, workers, [&](int b, int e) {
      for (int i = b; i < e; ++i) {
        raw_rows[i] = FeatureNet::flatten_image(make_bev(frames[i].cloud, bev_cfg));
      }
    });
  }

  const int n_tuples = static_cast<int>(tuples.size());
  const long steps_per_epoch = (n_tuples + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = steps_per_epoch * cfg.epochs;
  const long warmup_steps = steps_per_epoch * cfg.warmup_epochs;
  const int K = model.schedule.steps;
  const int N = cfg.tuple_len;

  nn::AdamW opt(model.params, {.weight_decay = cfg.weight_decay});

  auto build_input = [&](int epoch, const SequenceSample& tuple) {
    TupleInput in;
    in.image_rows.resize(N);
    in.t0.resize(N, 4);
    const std::uint64_t anchor = static_cast<std::uint64_t>(tuple.anchor());
    for (int slot = 0; slot < N; ++slot) {
      const int fi = tuple.frame_indices[slot];
      Pose2 label = frames[fi].pose;
      bool use_raw = true;
      Rng gate(mix_seed({cfg.seed, 0xA06ULL, static_cast<std::uint64_t>(epoch), anchor,
                         static_cast<std::uint64_t>(slot)}));
      if (gate.uniform() < aug_cfg.apply_probability) {
        std::vector<std::pair<PointCloud, Pose2>> members;
        for (int mi : local_map_indices(fi, n_frames, aug_cfg.frames_m, aug_cfg.interval_s)) {
          members.emplace_back(frames[mi].cloud, frames[mi].pose);
        }
        const PointCloud map =
            stitch_local_map(members, frames[fi].pose, bev_cfg.grid_resolution);
        for (std::uint64_t attempt = 0; attempt < 8; ++attempt) {
          const Pose2 vp = sample_virtual_pose(
              frames[fi].pose, aug_cfg,
              mix_seed({cfg.seed, 0xA17ULL, static_cast<std::uint64_t>(epoch), anchor,
                        static_cast<std::uint64_t>(slot), attempt}));
          auto view = render_virtual_bev(map, vp, frames[fi].pose, bev_cfg, aug_cfg.min_points);
          if (view) {
            in.image_rows[slot] = FeatureNet::flatten_image(view->image);
            label = view->label;
            use_raw = false;
            break;
          }
        }
      }
      if (use_raw) in.image_rows[slot] = raw_rows[fi];
      in.t0.row(slot) = model.normalizer.encode(label).transpose();
    }
    Rng kr(mix_seed({cfg.seed, 0xD1FULL, static_cast<std::uint64_t>(epoch), anchor}));
    in.k = 1 + static_cast<int>(kr.uniform_int(static_cast<std::uint64_t>(K)));
    Rng er(mix_seed({cfg.seed, 0xE95ULL, static_cast<std::uint64_t>(epoch), anchor}));
    in.eps.resize(N, 4);
    for (int r = 0; r < N; ++r) {
      for (int c = 0; c < 4; ++c) in.eps(r, c) = er.normal();
    }
    return in;
  };

  TrainResult result;
  long global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(n_tuples);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed({cfg.seed, 0x5FFULL, static_cast<std::uint64_t>(epoch)}));
    for (int i = n_tuples - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);
    }

    double epoch_loss = 0.0;
    for (long step = 0; step < steps_per_epoch; ++step) {
      const int b0 = static_cast<int>(step * cfg.batch_size);
      const int b1 = std::min(n_tuples, b0 + cfg.batch_size);
      const int batch_n = b1 - b0;

      std::vector<TupleInput> inputs(batch_n);
      for (int i = 0; i < batch_n; ++i) inputs[i] = build_input(epoch, tuples[order[b0 + i]]);

      const int workers = resolve_workers(cfg.workers, batch_n);
      std::vector<std::vector<Mat>> worker_grads(workers);
      std::vector<double> losses(batch_n, 0.0);
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) {
        const int jb = static_cast<int>(static_cast<long>(batch_n) * w / workers);
        const int je = static_cast<int>(static_cast<long>(batch_n) * (w + 1) / workers);
        pool.emplace_back([&, jb, je, w] {
          for (int i = jb; i < je; ++i) {
            const TupleInput& in = inputs[i];
            nn::Tape tape(true);
            nn::ParamBinding pb(tape, model.params, true);
            std::vector<int> feat_nodes(N);
            for (int slot = 0; slot < N; ++slot) {
              const int mfa = model.fnet->mfa_forward(tape, pb, in.image_rows[slot]);
              const int vit = model.fnet->vit_forward(tape, pb, model.fnet->tokenize(tape, pb, mfa));
              feat_nodes[slot] = model.fnet->global_head(tape, pb, vit);
            }
            const int feats = tape.concat_rows(feat_nodes);
            const int noisy = tape.leaf(add_noise(in.t0, in.k, in.eps, model.schedule));
            const int eps_hat = model.denoiser->forward(tape, pb, noisy, in.k, feats);
            const int loss = epsilon_loss_node(tape, eps_hat, tape.leaf(in.eps));
            losses[i] = tape.val(loss)(0, 0);
            tape.backward(loss);
            pb.export_grads(worker_grads[w], 1.0 / batch_n);
          }
        });
      }
      for (auto& t : pool) t.join();

      std::vector<Mat> grads(model.params.size());
      for (int w = 0; w < workers; ++w) {
        for (std::size_t p = 0; p < worker_grads[w].size(); ++p) {
          if (worker_grads[w][p].size() == 0) continue;
          if (grads[p].size() == 0) {
            grads[p] = worker_grads[w][p];
          } else {
            grads[p] += worker_grads[w][p];
          }
        }
      }

      double step_loss = 0.0;
      for (double l : losses) step_loss += l;
      step_loss /= batch_n;
      if (!std::isfinite(step_loss)) {
        if (!checkpoint_path.empty()) {
          nlohmann::json diag{{"epoch", epoch}, {"step", step}, {"loss", step_loss},
                              {"global_step", global_step}};
          std::ofstream f(checkpoint_path.string() + ".diag.json");
          f << diag.dump(2) << "\n";
        }
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      }

      const double lr = nn::lr_cosine_warmup(global_step, total_steps, warmup_steps, cfg.peak_lr);
      opt.step(grads, lr);
      epoch_loss += step_loss;
      ++global_step;
    }
    epoch_loss /= static_cast<double>(steps_per_epoch);
    result.epoch_losses.push_back(epoch_loss);
    if (log) {
      (*log) << "epoch " << epoch << "  loss " << epoch_loss << "\n";
      log->flush();
    }
    if (!checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
        ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs)) {
      CheckpointMeta meta;
      meta.loss_history = result.epoch_losses;
      meta.train_seed = cfg.seed;
      meta.epochs_completed = epoch + 1;
      save_checkpoint(checkpoint_path, model, meta);
    }
  }
  result.steps = global_step;
  return result;
}

EvalReport compute_metrics(std::vector<PerFrameRecord> records, double sr_trans,
                           double sr_yaw_deg) {
  EvalReport r;
  r.sr_trans = sr_trans;
  r.sr_yaw_deg = sr_yaw_deg;
  if (records.empty()) {
    r.frames = std::move(records);
    return r;
  }
  std::vector<double> ets, eys;
  ets.reserve(records.size());
  eys.reserve(records.size());
  int successes = 0;
  for (auto& rec : records) {
    const double dx = rec.pred.x - rec.truth.x;
    const double dy = rec.pred.y - rec.truth.y;
    rec.e_t = std::hypot(dx, dy);
    rec.e_y_deg = std::abs(wrap_angle(rec.pred.yaw - rec.truth.yaw)) * 180.0 / M_PI;
    rec.success = rec.e_t < sr_trans && rec.e_y_deg < sr_yaw_deg;
    successes += rec.success ? 1 : 0;
    ets.push_back(rec.e_t);
    eys.push_back(rec.e_y_deg);
  }
  r.e_t = std::accumulate(ets.begin(), ets.end(), 0.0) / ets.size();
  r.e_y_deg = std::accumulate(eys.begin(), eys.end(), 0.0) / eys.size();
  r.sr_percent = 100.0 * successes / static_cast<double>(records.size());
  r.median_e_t = median_of(ets);
  r.median_e_y_deg = median_of(eys);
  r.frames = std::move(records);
  return r;
}

EvalReport evaluate(const std::vector<FrameRecord>& frames, const Model& model,
                    const BevConfig& bev_cfg, int steps, std::uint64_t seed, double sr_trans,
                    double sr_yaw_deg, int workers, int tuple_len, int tuple_spacing) {
  bev_cfg.validate();
  if (steps < 1 || steps > model.schedule.steps) {
    throw std::invalid_argument("evaluate: steps out of [1, K]");
  }
  const int N = tuple_len > 0 ? tuple_len : model.cfg.denoiser.seq_len;
  if (N != model.cfg.denoiser.seq_len) {
    throw std::invalid_argument("evaluate: tuple_len must equal the denoiser sequence length");
  }
  const int n_frames = static_cast<int>(frames.size());
  const auto tuples = make_tuples(n_frames, N, tuple_spacing);
  const int w = resolve_workers(workers, n_frames);

  const auto t_start = std::chrono::steady_clock::now();

  // Per-frame features are shared by every tuple containing the frame.
  std::vector<Mat> feats(n_frames);
  run_chunked(n_frames, w, [&](int b, int e) {
    for (int i = b; i < e; ++i) {
      nn::Tape tape(false);
      nn::ParamBinding pb(tape, model.params, false);
      const BevImage img = make_bev(frames[i].cloud, bev_cfg);
      const int mfa = model.fnet->mfa_forward(tape, pb, FeatureNet::flatten_image(img));
      const int vit = model.fnet->vit_forward(tape, pb, model.fnet->tokenize(tape, pb, mfa));
      feats[i] = tape.val(model.fnet->global_head(tape, pb, vit));
    }
  });

  std::vector<PerFrameRecord> records(tuples.size());
  const int wt = resolve_workers(workers, static_cast<int>(tuples.size()));
  run_chunked(static_cast<int>(tuples.size()), wt, [&](int b, int e) {
    for (int i = b; i < e; ++i) {
      const auto& tuple = tuples[i];
      Mat cond(N, model.cfg.denoiser.feat_dim);
      for (int slot = 0; slot < N; ++slot) cond.row(slot) = feats[tuple.frame_indices[slot]];
      const auto eps_fn = [&](const Mat& noisy, int k) {
        return model.denoiser->predict(model.params, noisy, k, cond);
      };
      const std::int64_t anchor_id = frames[tuple.anchor()].frame_id;
      const Mat t0 = ddim_sample(eps_fn, N, steps, model.schedule,
                                 mix_seed({seed, 0xE7A1ULL, static_cast<std::uint64_t>(anchor_id)}));
      PerFrameRecord rec;
      rec.frame_id = anchor_id;
      rec.truth = frames[tuple.anchor()].pose;
      rec.pred = model.normalizer.decode(t0.row(N - 1).transpose());
      records[i] = rec;
    }
  });

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  EvalReport report = compute_metrics(std::move(records), sr_trans, sr_yaw_deg);
  report.ddim_steps = steps;
  report.mean_hz = seconds > 0 ? static_cast<double>(tuples.size()) / seconds : 0.0;
  return report;
}

void write_report_json(const std::filesystem::path& path, const EvalReport& r) {
  nlohmann::json j{{"e_t", r.e_t},
                   {"e_y", r.e_y_deg},
                   {"sr", r.sr_percent},
                   {"median_e_t", r.median_e_t},
                   {"median_e_y", r.median_e_y_deg},
                   {"mean_hz", r.mean_hz},
                   {"ddim_steps", r.ddim_steps},
                   {"sr_trans", r.sr_trans},
                   {"sr_yaw", r.sr_yaw_deg},
                   {"frame_count", r.frames.size()}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_report_json: cannot open " + path.string());
  f << j.dump(2) << "\n";
}

void write_per_frame_csv(const std::filesystem::path& path, const EvalReport& r) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_per_frame_csv: cannot open " + path.string());
  f << "frame_id,x,y,yaw,pred_x,pred_y,pred_yaw,e_t,e_y,success\n";
  char line[256];
  for (const auto& rec : r.frames) {
    std::snprintf(line, sizeof(line), "%" PRId64 ",%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n",
                  rec.frame_id, rec.truth.x, rec.truth.y, rec.truth.yaw, rec.pred.x, rec.pred.y,
                  rec.pred.yaw, rec.e_t, rec.e_y_deg, rec.success ? 1 : 0);
    f << line;
  }
}

}  // namespace bevloc
