#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "bevloc/dataset.hpp"
#include "bevloc/rng.hpp"
#include "bevloc/synthworld.hpp"

using namespace bevloc;

namespace {

WorldModel single_wall_world(double wall_x, double half_len) {
  WorldModel w;
  w.extent = 200.0;
  w.corridor_outer = 90.0;
  w.corridor_inner = 80.0;
  Obstacle o;
  o.polygon = {{wall_x, -half_len}, {wall_x + 1.0, -half_len},
               {wall_x + 1.0, half_len}, {wall_x, half_len}};
  o.z_lo = 0.0;
  o.z_hi = 10.0;
  w.obstacles.push_back(o);
  return w;
}

}  // namespace

TEST_CASE("generate_world: determinism, containment, corridor clearance") {
  const WorldModel a = generate_world(7, {});
  const WorldModel b = generate_world(7, {});
  REQUIRE(a.obstacles.size() == b.obstacles.size());
  for (std::size_t i = 0; i < a.obstacles.size(); ++i) {
    REQUIRE(a.obstacles[i].polygon.size() == b.obstacles[i].polygon.size());
    for (std::size_t j = 0; j < a.obstacles[i].polygon.size(); ++j) {
      CHECK(a.obstacles[i].polygon[j] == b.obstacles[i].polygon[j]);
    }
    CHECK(a.obstacles[i].z_hi == b.obstacles[i].z_hi);
  }
  CHECK(a.obstacles.size() > 10);

  for (const auto& o : a.obstacles) {
    CHECK(o.area() > 0.01);
    for (const auto& v : o.polygon) {
      // polygon-containment oracle against the extent
      CHECK(std::abs(v.x()) <= a.extent / 2);
      CHECK(std::abs(v.y()) <= a.extent / 2);
    }
    // nothing may poke into the free corridor ring
    bool all_inside_inner = true, all_outside_outer = true;
    for (const auto& v : o.polygon) {
      const double m = std::max(std::abs(v.x()), std::abs(v.y()));
      all_inside_inner = all_inside_inner && (m <= a.corridor_inner);
      all_outside_outer = all_outside_outer && (m >= a.corridor_outer);
    }
    CHECK((all_inside_inner || all_outside_outer));
  }
}

TEST_CASE("generate_world: zero density and infeasible params") {
  WorldParams p;
  p.block_fill = 0.0;
  p.pole_fill = 0.0;
  CHECK(generate_world(3, p).obstacles.empty());

  WorldParams tiny;
  tiny.extent = 10.0;
  CHECK_THROWS_AS(generate_world(3, tiny), std::invalid_argument);
}

TEST_CASE("simulate_scan: empty world, collision, analytic wall ranges") {
  WorldModel empty;
  empty.extent = 100.0;
  ScanConfig cfg;
  CHECK(simulate_scan(empty, Pose2(0, 0, 0), cfg, 1).empty());

  const WorldModel wall = single_wall_world(10.0, 15.0);
  CHECK_THROWS_WITH_AS(simulate_scan(wall, Pose2(10.5, 0, 0), cfg, 1),
                       "pose in collision", std::runtime_error);

  ScanConfig clean;
  clean.range_noise_std = 0.0;
  clean.dropout_prob = 0.0;
  clean.rings = 1;
  clean.ring_heights = {1.0};
  clean.beams = 720;
  const PointCloud pts = simulate_scan(wall, Pose2(0, 0, 0), clean, 1);
  CHECK(pts.size() > 100);
  int front_hits = 0;
  for (const auto& p : pts) {
    CHECK(p.z() == 1.0);
    // analytic ray-segment oracle for beams that face the front wall x = 10
    const double az = std::atan2(p.y(), p.x());
    if (std::abs(az) > std::atan2(14.0, 10.0)) continue;
    const double expect = 10.0 / std::cos(az);
    CHECK(std::abs(p.head<2>().norm() - expect) < 1e-9);
    ++front_hits;
  }
  CHECK(front_hits > 100);
}

TEST_CASE("simulate_scan: range noise statistics over 1e5 rays") {
  // enclosing box so every beam hits; one ring, ~1e5 beams
  WorldModel box;
  box.extent = 100.0;
  Obstacle o;
  o.polygon = {{-20, -20}, {20, -20}, {20, 20}, {-20, 20}};
  o.z_lo = 0.0;
  o.z_hi = 5.0;
  box.obstacles.push_back(o);
  // sensor inside the polygon would collide; carve the test differently:
  // use four separate walls forming a room
  box.obstacles.clear();
  auto wall = [&](double cx, double cy, double hx, double hy) {
    Obstacle w;
    w.polygon = {{cx - hx, cy - hy}, {cx + hx, cy - hy}, {cx + hx, cy + hy}, {cx - hx, cy + hy}};
    w.z_lo = 0.0;
    w.z_hi = 5.0;
    box.obstacles.push_back(w);
  };
  wall(0, 21, 25, 1);
  wall(0, -21, 25, 1);
  wall(21, 0, 1, 25);
  wall(-21, 0, 1, 25);

  ScanConfig noisy;
  noisy.rings = 1;
  noisy.ring_heights = {1.0};
  noisy.beams = 100000;
  noisy.range_noise_std = 0.02;
  noisy.dropout_prob = 0.0;
  ScanConfig clean = noisy;
  clean.range_noise_std = 0.0;

  const PointCloud a = simulate_scan(box, Pose2(0, 0, 0), noisy, 9);
  const PointCloud b = simulate_scan(box, Pose2(0, 0, 0), clean, 9);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == 100000);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = a[i].head<2>().norm() - b[i].head<2>().norm();
    sum += r;
    sum2 += r * r;
  }
  const double mean = sum / a.size();
  const double std = std::sqrt(sum2 / a.size() - mean * mean);
  CHECK(std > 0.0196);
  CHECK(std < 0.0204);
}

TEST_CASE("simulate_scan: sensor-frame consistency in a generated world") {
  const WorldModel w = generate_world(11, {});
  ScanConfig cfg;
  cfg.range_noise_std = 0.0;
  cfg.dropout_prob = 0.0;
  cfg.beams = 180;
  const auto traj = generate_trajectory(w, 3, 1.0, 5);
  for (const auto& pose : traj) {
    for (const auto& p : transform_cloud(pose, simulate_scan(w, pose, cfg, 2))) {
      double best = 1e9;
      for (const auto& o : w.obstacles) {
        const std::size_t n = o.polygon.size();
        for (std::size_t i = 0; i < n; ++i) {
          const Eigen::Vector2d a = o.polygon[i];
          const Eigen::Vector2d ab = o.polygon[(i + 1) % n] - a;
          const double t = std::clamp((p.head<2>() - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
          best = std::min(best, (p.head<2>() - (a + t * ab)).norm());
        }
      }
      CHECK(best < 1e-6);
    }
  }
}

TEST_CASE("generate_trajectory: contracts") {
  const WorldModel w = generate_world(4, {});
  const auto one = generate_trajectory(w, 1, 0.5, 9);
  CHECK(one.size() == 1);

  const auto a = generate_trajectory(w, 400, 0.5, 9);
  const auto b = generate_trajectory(w, 400, 0.5, 9);
  REQUIRE(a.size() == 400);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].y == b[i].y);
    CHECK(a[i].yaw == b[i].yaw);
    CHECK_FALSE(w.in_collision({a[i].x, a[i].y}));
    if (i > 0) CHECK(std::abs(wrap_angle(a[i].yaw - a[i - 1].yaw)) <= 0.2);
  }
  CHECK_THROWS(generate_trajectory(w, 100, 5.0, 9));  // corner curvature limit
}

TEST_CASE("dataset: generate, save, reload") {
  ScanConfig scan;
  scan.beams = 90;
  WorldParams wp;
  wp.extent = 60.0;
  const Dataset ds = generate_dataset(2, 3, 4, wp, scan, 15, 0.8);
  REQUIRE(ds.frames.size() == 15);
  for (std::size_t i = 1; i < ds.frames.size(); ++i) {
    CHECK(ds.frames[i].frame_id > ds.frames[i - 1].frame_id);
  }

  const auto dir = std::filesystem::temp_directory_path() / "bevloc_test_dataset";
  std::filesystem::remove_all(dir);
  save_dataset(dir, ds);
  CHECK(std::filesystem::exists(dir / "world.json"));
  CHECK(std::filesystem::exists(dir / "meta.json"));
  CHECK(std::filesystem::exists(dir / "poses.csv"));
  CHECK(std::filesystem::exists(dir / "clouds" / "000000.bin"));

  const Dataset back = load_dataset(dir);
  REQUIRE(back.frames.size() == ds.frames.size());
  CHECK(back.world.obstacles.size() == ds.world.obstacles.size());
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    CHECK(std::abs(back.frames[i].pose.x - ds.frames[i].pose.x) < 1e-6);
    CHECK(std::abs(back.frames[i].pose.yaw - ds.frames[i].pose.yaw) < 1e-6);
    REQUIRE(back.frames[i].cloud.size() == ds.frames[i].cloud.size());
    for (std::size_t j = 0; j < ds.frames[i].cloud.size(); ++j) {
      // clouds are stored as float32
      CHECK((back.frames[i].cloud[j] - ds.frames[i].cloud[j]).cwiseAbs().maxCoeff() < 1e-5);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset: byte-identical regeneration") {
  ScanConfig scan;
  scan.beams = 60;
  WorldParams wp;
  wp.extent = 40.0;
  const auto dir1 = std::filesystem::temp_directory_path() / "bevloc_ds_a";
  const auto dir2 = std::filesystem::temp_directory_path() / "bevloc_ds_b";
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
  save_dataset(dir1, generate_dataset(5, 6, 7, wp, scan, 8, 0.6));
  save_dataset(dir2, generate_dataset(5, 6, 7, wp, scan, 8, 0.6));
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir1)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), dir1);
    std::ifstream f1(entry.path(), std::ios::binary);
    std::ifstream f2(dir2 / rel, std::ios::binary);
    REQUIRE(f2.good());
    const std::string s1((std::istreambuf_iterator<char>(f1)), {});
    const std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
  }
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}
