#include "bevloc/dataset.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "bevloc/rng.hpp"

namespace bevloc {

using nlohmann::json;

Dataset generate_dataset(std::uint64_t world_seed, std::uint64_t trajectory_seed,
                         std::uint64_t scan_seed, const WorldParams& world_params,
                         const ScanConfig& scan_cfg, int frame_count, double speed) {
  Dataset ds;
  ds.world_seed = world_seed;
  ds.trajectory_seed = trajectory_seed;
  ds.scan_seed = scan_seed;
  ds.speed = speed;
  ds.scan = scan_cfg;
  ds.world = generate_world(world_seed, world_params);
  const auto poses = generate_trajectory(ds.world, frame_count, speed, trajectory_seed);
  ds.frames.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    FrameRecord f;
    f.frame_id = static_cast<std::int64_t>(i);
    f.timestamp = 0.1 * static_cast<double>(i);  // 10 Hz
    f.pose = poses[i];
    f.cloud = simulate_scan(ds.world, poses[i], scan_cfg, mix_seed({scan_seed, i}));
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

void save_cloud_bin(const std::filesystem::path& path, const PointCloud& c) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_cloud_bin: cannot open " + path.string());
  for (const auto& p : c) {
    const float xyz[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                          static_cast<float>(p.z())};
    f.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  }
  if (!f) throw std::runtime_error("save_cloud_bin: short write " + path.string());
}

PointCloud load_cloud_bin(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("load_cloud_bin: cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(f.tellg());
  if (bytes % 12 != 0) throw std::runtime_error("load_cloud_bin: size not a triplet multiple");
  f.seekg(0);
  PointCloud c;
  c.reserve(bytes / 12);
  for (std::size_t i = 0; i < bytes / 12; ++i) {
    float xyz[3];
    f.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
    if (!f) throw std::runtime_error("load_cloud_bin: truncated " + path.string());
    c.emplace_back(xyz[0], xyz[1], xyz[2]);
  }
  return c;
}

namespace {

json scan_to_json(const ScanConfig& s) {
  return json{{"beams", s.beams},
              {"rings", s.rings},
              {"ring_heights", s.ring_heights},
              {"max_range", s.max_range},
              {"range_noise_std", s.range_noise_std},
              {"dropout_prob", s.dropout_prob}};
}

ScanConfig scan_from_json(const json& j) {
  ScanConfig s;
  s.beams = j.at("beams");
  s.rings = j.at("rings");
  s.ring_heights = j.at("ring_heights").get<std::vector<double>>();
  s.max_range = j.at("max_range");
  s.range_noise_std = j.at("range_noise_std");
  s.dropout_prob = j.at("dropout_prob");
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << text;
  if (!f) throw std::runtime_error("short write " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  json j;
  f >> j;
  return j;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir / "clouds");

  const json world_j{{"extent", ds.world.params.extent},
                     {"params",
                      {{"extent", ds.world.params.extent},
                       {"block_fill", ds.world.params.block_fill},
                       {"pole_fill", ds.world.params.pole_fill},
                       {"pole_spacing", ds.world.params.pole_spacing}}},
                     {"seed", ds.world_seed},
                     {"trajectory_seed", ds.trajectory_seed},
                     {"scan_seed", ds.scan_seed},
                     {"speed", ds.speed},
                     {"obstacle_count", ds.world.obstacles.size()}};
  write_text(dir / "world.json", world_j.dump(2) + "\n");

  const json meta{{"format", "bevloc-dataset"},
                  {"version", 1},
                  {"frame_count", ds.frames.size()},
                  {"scan", scan_to_json(ds.scan)}};
  write_text(dir / "meta.json", meta.dump(2) + "\n");

  std::string csv = "frame_id,timestamp,x,y,yaw\n";
  char line[160];
  for (const auto& f : ds.frames) {
    std::snprintf(line, sizeof(line), "%" PRId64 ",%.6f,%.9g,%.9g,%.9g\n", f.frame_id,
                  f.timestamp, f.pose.x, f.pose.y, f.pose.yaw);
    csv += line;
    std::snprintf(line, sizeof(line), "%06" PRId64 ".bin", f.frame_id);
    save_cloud_bin(dir / "clouds" / line, f.cloud);
  }
  write_text(dir / "poses.csv", csv);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  const json meta = read_json(dir / "meta.json");
  if (meta.at("format") != "bevloc-dataset" || meta.at("version") != 1) {
    throw std::runtime_error("load_dataset: unsupported dataset format in " + dir.string());
  }
  ds.scan = scan_from_json(meta.at("scan"));

  const json wj = read_json(dir / "world.json");
  WorldParams wp;
  wp.extent = wj.at("params").at("extent");
  wp.block_fill = wj.at("params").at("block_fill");
  wp.pole_fill = wj.at("params").at("pole_fill");
  wp.pole_spacing = wj.at("params").at("pole_spacing");
  ds.world_seed = wj.at("seed");
  ds.trajectory_seed = wj.at("trajectory_seed");
  ds.scan_seed = wj.at("scan_seed");
  ds.speed = wj.at("speed");
  ds.world = generate_world(ds.world_seed, wp);
  if (wj.contains("obstacle_count") &&
      wj.at("obstacle_count").get<std::size_t>() != ds.world.obstacles.size()) {
    throw std::runtime_error("load_dataset: regenerated world disagrees with world.json");
  }

  std::ifstream csv(dir / "poses.csv");
  if (!csv) throw std::runtime_error("load_dataset: missing poses.csv");
  std::string header;
  std::getline(csv, header);
  if (header != "frame_id,timestamp,x,y,yaw") {
    throw std::runtime_error("load_dataset: unexpected poses.csv header");
  }
  std::string line;
  std::int64_t prev_id = -1;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    FrameRecord f;
    double yaw = 0.0;
    if (std::sscanf(line.c_str(), "%" SCNd64 ",%lf,%lf,%lf,%lf", &f.frame_id, &f.timestamp,
                    &f.pose.x, &f.pose.y, &yaw) != 5) {
      throw std::runtime_error("load_dataset: bad poses.csv row: " + line);
    }
    f.pose.yaw = wrap_angle(yaw);
    if (f.frame_id <= prev_id) {
      throw std::runtime_error("load_dataset: frame ids not strictly increasing");
    }
    prev_id = f.frame_id;
    char name[32];
    std::snprintf(name, sizeof(name), "%06" PRId64 ".bin", f.frame_id);
    f.cloud = load_cloud_bin(dir / "clouds" / name);
    ds.frames.push_back(std::move(f));
  }
  const std::size_t expected = meta.at("frame_count");
  if (ds.frames.size() != expected) {
    throw std::runtime_error("load_dataset: frame count disagrees with meta.json");
  }
  return ds;
}

}  // namespace bevloc
