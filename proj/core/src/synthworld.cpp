#include "bevloc/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bevloc/rng.hpp"

namespace bevloc {

double Obstacle::area() const {
  double a = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = polygon[i];
    const auto& q = polygon[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::abs(a);
}

bool Obstacle::contains(const Eigen::Vector2d& p) const {
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d e = polygon[(i + 1) % n] - polygon[i];
    const Eigen::Vector2d d = p - polygon[i];
    if (e.x() * d.y() - e.y() * d.x() < 0.0) return false;  // CCW polygons
  }
  return true;
}

bool WorldModel::in_collision(const Eigen::Vector2d& p) const {
  for (const auto& o : obstacles) {
    if (o.contains(p)) return true;
  }
  return false;
}

namespace {

Obstacle make_box(double cx, double cy, double hx, double hy, double z_lo, double z_hi) {
  Obstacle o;
  o.polygon = {{cx - hx, cy - hy}, {cx + hx, cy - hy}, {cx + hx, cy + hy}, {cx - hx, cy + hy}};
  o.z_lo = z_lo;
  o.z_hi = z_hi;
  return o;
}

}  // namespace

WorldModel generate_world(std::uint64_t seed, const WorldParams& params) {
  if (params.extent < 20.0) {
    throw std::invalid_argument("generate_world: extent must be >= 20 m");
  }
  WorldModel w;
  w.extent = params.extent;
  w.seed = seed;
  w.params = params;

  const double half = params.extent / 2.0;
  const double margin = std::max(2.0, 0.06 * params.extent);
  const double width = std::max(3.0, 0.08 * params.extent);
  w.corridor_outer = half - margin;
  w.corridor_inner = w.corridor_outer - width;
  if (w.corridor_inner <= 2.0) {
    throw std::invalid_argument("generate_world: no room for a loop corridor");
  }
  const double corridor_area = 4.0 * (w.corridor_outer * w.corridor_outer -
                                      w.corridor_inner * w.corridor_inner);
  if (corridor_area < 0.2 * params.extent * params.extent) {
    throw std::invalid_argument("generate_world: corridor free space below 20% of extent");
  }

  Rng rng(mix_seed({seed, 0x77b1dULL}));

  // Interior city blocks.
  const double inner_half = w.corridor_inner - 1.0;
  const int cells = std::max(1, static_cast<int>(std::lround(2.0 * inner_half / 12.0)));
  const double cell = 2.0 * inner_half / cells;
  for (int i = 0; i < cells; ++i) {
    for (int j = 0; j < cells; ++j) {
      const double u = rng.uniform();  // drawn unconditionally to keep layout
      const double jx = rng.uniform(-0.1, 0.1) * cell;
      const double jy = rng.uniform(-0.1, 0.1) * cell;
      const double hx = rng.uniform(0.25, 0.42) * cell;
      const double hy = rng.uniform(0.25, 0.42) * cell;
      const double height = rng.uniform(3.0, 12.0);
      if (u >= params.block_fill) continue;
      const double cx = -inner_half + (i + 0.5) * cell + jx;
      const double cy = -inner_half + (j + 0.5) * cell + jy;
      const double bx = std::min(hx, inner_half - std::abs(cx));
      const double by = std::min(hy, inner_half - std::abs(cy));
      if (bx < 0.5 || by < 0.5) continue;
      w.obstacles.push_back(make_box(cx, cy, bx, by, 0.0, height));
    }
  }

  // Outer band buildings (between the corridor and the world boundary).
  const double band_lo = w.corridor_outer + 0.5;
  const double band_hi = half - 0.5;
  if (band_hi - band_lo >= 1.5) {
    const double band_mid = 0.5 * (band_lo + band_hi);
    const double band_half = 0.5 * (band_hi - band_lo);
    const int per_side = std::max(2, static_cast<int>(std::lround(w.corridor_outer / 5.0)));
    for (int side = 0; side < 4; ++side) {
      for (int i = 0; i < per_side; ++i) {
        const double u = rng.uniform();
        const double t = -w.corridor_outer + (i + 0.5) * (2.0 * w.corridor_outer / per_side) +
                         rng.uniform(-1.0, 1.0);
        const double len = rng.uniform(2.0, 4.5);
        const double depth = rng.uniform(0.5, 1.0) * band_half;
        const double height = rng.uniform(3.0, 12.0);
        if (u >= params.block_fill) continue;
        const double tc = std::clamp(t, -w.corridor_outer + len, w.corridor_outer - len);
        switch (side) {
          case 0: w.obstacles.push_back(make_box(tc, band_mid, len, depth, 0.0, height)); break;
          case 1: w.obstacles.push_back(make_box(tc, -band_mid, len, depth, 0.0, height)); break;
          case 2: w.obstacles.push_back(make_box(band_mid, tc, depth, len, 0.0, height)); break;
          case 3: w.obstacles.push_back(make_box(-band_mid, tc, depth, len, 0.0, height)); break;
        }
      }
    }
  }

  // Poles hugging both corridor edges, just outside the free ring.
  if (params.pole_spacing > 0.5) {
    for (const double r : {w.corridor_outer + 0.4, w.corridor_inner - 0.4}) {
      const int per_side = std::max(1, static_cast<int>(2.0 * r / params.pole_spacing));
      for (int side = 0; side < 4; ++side) {
        for (int i = 0; i < per_side; ++i) {
          const double u = rng.uniform();
          const double t = -r + (i + 0.5) * (2.0 * r / per_side);
          const double height = rng.uniform(2.0, 5.0);
          if (u >= params.pole_fill) continue;
          double cx = 0.0, cy = 0.0;
          switch (side) {
            case 0: cx = t;  cy = r;  break;
            case 1: cx = t;  cy = -r; break;
            case 2: cx = r;  cy = t;  break;
            case 3: cx = -r; cy = t;  break;
          }
          w.obstacles.push_back(make_box(cx, cy, 0.15, 0.15, 0.0, height));
        }
      }
    }
  }

  for (const auto& o : w.obstacles) {
    if (o.area() <= 0.01) throw std::logic_error("generate_world: degenerate obstacle");
    for (const auto& v : o.polygon) {
      if (std::abs(v.x()) > half || std::abs(v.y()) > half) {
        throw std::logic_error("generate_world: obstacle outside extent");
      }
    }
  }
  return w;
}

void ScanConfig::validate() const {
  if (beams < 8) throw std::invalid_argument("ScanConfig: beams must be >= 8");
  if (rings < 1 || ring_heights.size() != static_cast<std::size_t>(rings)) {
    throw std::invalid_argument("ScanConfig: ring_heights size must equal rings");
  }
  if (!(max_range > 0.0)) throw std::invalid_argument("ScanConfig: max_range must be > 0");
  if (range_noise_std < 0.0 || dropout_prob < 0.0 || dropout_prob > 1.0) {
    throw std::invalid_argument("ScanConfig: invalid noise settings");
  }
}

namespace {

/// Nearest forward intersection of ray o + t*d with the polygon boundary.
double ray_polygon(const Eigen::Vector2d& o, const Eigen::Vector2d& d, const Obstacle& obs) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = obs.polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& a = obs.polygon[i];
    const Eigen::Vector2d ab = obs.polygon[(i + 1) % n] - a;
    const double den = d.x() * ab.y() - d.y() * ab.x();
    if (std::abs(den) < 1e-15) continue;
    const Eigen::Vector2d ao = a - o;
    const double t = (ao.x() * ab.y() - ao.y() * ab.x()) / den;
    const double u = (ao.x() * d.y() - ao.y() * d.x()) / den;
    if (t > 1e-9 && u >= 0.0 && u <= 1.0) best = std::min(best, t);
  }
  return best;
}

struct Culled {
  const Obstacle* obs;
  Eigen::Vector2d center;
  double radius;
};

}  // namespace

PointCloud simulate_scan(const WorldModel& world, const Pose2& pose, const ScanConfig& cfg,
                         std::uint64_t seed) {
  cfg.validate();
  const Eigen::Vector2d origin(pose.x, pose.y);
  if (world.in_collision(origin)) throw std::runtime_error("pose in collision");

  // Bounding circles for cheap per-ray rejection.
  std::vector<Culled> all;
  all.reserve(world.obstacles.size());
  for (const auto& o : world.obstacles) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (const auto& v : o.polygon) c += v;
    c /= static_cast<double>(o.polygon.size());
    double r = 0.0;
    for (const auto& v : o.polygon) r = std::max(r, (v - c).norm());
    all.push_back({&o, c, r});
  }

  Rng rng(mix_seed({seed, 0x5ca9ULL}));
  PointCloud out;
  out.reserve(static_cast<std::size_t>(cfg.beams) * cfg.rings / 2);
  std::vector<const Culled*> ring_obs;
  for (int ring = 0; ring < cfg.rings; ++ring) {
    const double h = cfg.ring_heights[ring];
    ring_obs.clear();
    for (const auto& c : all) {
      if (c.obs->z_lo <= h && h <= c.obs->z_hi) ring_obs.push_back(&c);
    }
    for (int b = 0; b < cfg.beams; ++b) {
      const double az = 2.0 * M_PI * b / cfg.beams;  // sensor frame
      const double wa = pose.yaw + az;
      const Eigen::Vector2d d(std::cos(wa), std::sin(wa));
      double t = std::numeric_limits<double>::infinity();
      for (const Culled* c : ring_obs) {
        const Eigen::Vector2d co = c->center - origin;
        const double along = co.dot(d);
        if (along < -c->radius) continue;
        if (std::abs(d.x() * co.y() - d.y() * co.x()) > c->radius) continue;
        t = std::min(t, ray_polygon(origin, d, *c->obs));
      }
      if (!(t <= cfg.max_range)) continue;
      if (cfg.dropout_prob > 0.0 && rng.uniform() < cfg.dropout_prob) continue;
      const double r = t + (cfg.range_noise_std > 0.0 ? rng.normal(0.0, cfg.range_noise_std) : 0.0);
      out.emplace_back(r * std::cos(az), r * std::sin(az), h);
    }
  }
  return out;
}

namespace {

/// Rounded-rectangle ring: four straights and four quarter arcs, centered
/// at the origin with straight half-length `lh` and corner radius `rc`.
/// Returns position and unit tangent at arclength s (counter-clockwise).
void ring_eval(double lh, double rc, double perimeter, double s, Eigen::Vector2d& p,
               Eigen::Vector2d& tan) {
  s = std::fmod(s, perimeter);
  if (s < 0) s += perimeter;
  const double straight = 2.0 * lh;
  const double arc = 0.5 * M_PI * rc;
  const double ring_r = lh + rc;
  struct Seg {
    int kind;  // 0 straight, 1 arc
    double len;
  };
  const Seg segs[8] = {{0, straight}, {1, arc}, {0, straight}, {1, arc},
                       {0, straight}, {1, arc}, {0, straight}, {1, arc}};
  int k = 0;
  while (s > segs[k].len) {
    s -= segs[k].len;
    ++k;
  }
  const int quadrant = k / 2;
  if (segs[k].kind == 0) {
    switch (quadrant) {
      case 0: p = {ring_r, -lh + s};  tan = {0, 1};  break;   // east side, going north
      case 1: p = {lh - s, ring_r};   tan = {-1, 0}; break;   // north side, going west
      case 2: p = {-ring_r, lh - s};  tan = {0, -1}; break;   // west side, going south
      default: p = {-lh + s, -ring_r}; tan = {1, 0};  break;  // south side, going east
    }
  } else {
    const double a0 = quadrant * 0.5 * M_PI;  // arc start angle from +x axis
    const double a = a0 + s / rc;
    Eigen::Vector2d corner;
    switch (quadrant) {
      case 0: corner = {lh, lh};   break;
      case 1: corner = {-lh, lh};  break;
      case 2: corner = {-lh, -lh}; break;
      default: corner = {lh, -lh}; break;
    }
    p = corner + rc * Eigen::Vector2d(std::cos(a), std::sin(a));
    tan = {-std::sin(a), std::cos(a)};
  }
}

}  // namespace

std::vector<Pose2> generate_trajectory(const WorldModel& world, int length, double speed,
                                       std::uint64_t seed) {
  if (length < 1) throw std::invalid_argument("generate_trajectory: length must be >= 1");
  if (!(speed > 0.0)) throw std::invalid_argument("generate_trajectory: speed must be > 0");

  const double mid = 0.5 * (world.corridor_outer + world.corridor_inner);
  const double corridor_half = 0.5 * (world.corridor_outer - world.corridor_inner);
  const double rc = std::min(6.0, mid * 0.25);
  const double lh = mid - rc;
  if (lh <= 0.0) throw std::runtime_error("generate_trajectory: no feasible path");
  const double perimeter = 8.0 * lh + 2.0 * M_PI * rc;

  if (speed / rc > 0.18) {
    throw std::runtime_error("generate_trajectory: speed too high for corner curvature");
  }

  Rng rng(mix_seed({seed, 0x7fa11ULL}));
  const double s0 = rng.uniform(0.0, perimeter);
  const double dir = (rng.next_u64() & 1) ? 1.0 : -1.0;

  // Lateral wobble: integer spatial frequencies keep the loop continuous.
  const double max_amp = std::max(0.0, std::min(1.5, corridor_half - 1.2));
  double amps[3], phase[3];
  int freq[3];
  for (int i = 0; i < 3; ++i) {
    amps[i] = rng.uniform(0.2, 1.0);
    phase[i] = rng.uniform(0.0, 2.0 * M_PI);
    freq[i] = 1 + static_cast<int>(rng.uniform_int(4));
  }
  const double norm = amps[0] + amps[1] + amps[2];
  for (double& a : amps) a *= (norm > 0 ? max_amp / norm : 0.0);

  auto offset = [&](double s) {
    double n = 0.0;
    for (int i = 0; i < 3; ++i) n += amps[i] * std::sin(2.0 * M_PI * freq[i] * s / perimeter + phase[i]);
    return n;
  };

  std::vector<Eigen::Vector2d> pts(length + 1);
  for (int i = 0; i <= length; ++i) {
    const double s = s0 + dir * i * speed;
    Eigen::Vector2d p, tan;
    ring_eval(lh, rc, perimeter, s, p, tan);
    const Eigen::Vector2d normal(-tan.y(), tan.x());
    pts[i] = p + offset(s) * normal;
  }

  std::vector<Pose2> poses;
  poses.reserve(length);
  double prev_yaw = 0.0;
  for (int i = 0; i < length; ++i) {
    // The step sequence already runs along the direction of travel.
    const Eigen::Vector2d d = pts[i + 1] - pts[i];
    const double yaw = (d.norm() > 1e-12) ? std::atan2(d.y(), d.x()) : prev_yaw;
    poses.emplace_back(pts[i].x(), pts[i].y(), yaw);
    if (i > 0 && std::abs(wrap_angle(poses[i].yaw - poses[i - 1].yaw)) > 0.2) {
      throw std::runtime_error("generate_trajectory: yaw rate limit exceeded");
    }
    if (world.in_collision(pts[i])) {
      throw std::runtime_error("generate_trajectory: no feasible path");
    }
    prev_yaw = yaw;
  }
  return poses;
}

}  // namespace bevloc
