#include "bevloc/plotting.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "bevloc/bev_io.hpp"

namespace bevloc {

std::vector<PerFrameRecord> read_per_frame_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_per_frame_csv: cannot open " + path.string());
  std::string line;
  std::getline(f, line);
  if (line != "frame_id,x,y,yaw,pred_x,pred_y,pred_yaw,e_t,e_y,success") {
    throw std::runtime_error("read_per_frame_csv: unexpected header");
  }
  std::vector<PerFrameRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    PerFrameRecord r;
    int success = 0;
    double tyaw = 0.0, pyaw = 0.0;
    if (std::sscanf(line.c_str(), "%" SCNd64 ",%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%d", &r.frame_id,
                    &r.truth.x, &r.truth.y, &tyaw, &r.pred.x, &r.pred.y, &pyaw, &r.e_t,
                    &r.e_y_deg, &success) != 10) {
      throw std::runtime_error("read_per_frame_csv: bad row: " + line);
    }
    r.truth.yaw = tyaw;
    r.pred.yaw = pyaw;
    r.success = success != 0;
    out.push_back(r);
  }
  return out;
}

std::array<std::uint8_t, 3> success_color(bool success) {
  return success ? std::array<std::uint8_t, 3>{220, 30, 30}
                 : std::array<std::uint8_t, 3>{10, 10, 10};
}

std::array<std::uint8_t, 3> heat_color(double e_y_deg, double cap_deg) {
  const double t = std::clamp(e_y_deg / cap_deg, 0.0, 1.0);
  // blue (0,60,220) -> red (220,30,30)
  return {static_cast<std::uint8_t>(std::lround(220.0 * t)),
          static_cast<std::uint8_t>(std::lround(60.0 - 30.0 * t)),
          static_cast<std::uint8_t>(std::lround(220.0 - 190.0 * t))};
}

namespace {

struct Bounds {
  double x0, x1, y0, y1;
};

Bounds data_bounds(const std::vector<PerFrameRecord>& recs) {
  Bounds b{0, 1, 0, 1};
  if (!recs.empty()) {
    b = {recs[0].truth.x, recs[0].truth.x, recs[0].truth.y, recs[0].truth.y};
    for (const auto& r : recs) {
      b.x0 = std::min(b.x0, r.truth.x);
      b.x1 = std::max(b.x1, r.truth.x);
      b.y0 = std::min(b.y0, r.truth.y);
      b.y1 = std::max(b.y1, r.truth.y);
    }
  }
  const double pad = 0.06 * std::max({b.x1 - b.x0, b.y1 - b.y0, 1.0});
  return {b.x0 - pad, b.x1 + pad, b.y0 - pad, b.y1 + pad};
}

struct Canvas {
  int side;
  std::vector<std::uint8_t> rgb;
  Bounds b;

  explicit Canvas(int side_, const Bounds& bounds)
      : side(side_), rgb(static_cast<std::size_t>(side_) * side_ * 3, 255), b(bounds) {}

  void to_px(double x, double y, double& px, double& py) const {
    px = (x - b.x0) / (b.x1 - b.x0) * (side - 1);
    py = (1.0 - (y - b.y0) / (b.y1 - b.y0)) * (side - 1);  // y up
  }

  void set(int x, int y, const std::array<std::uint8_t, 3>& c) {
    if (x < 0 || x >= side || y < 0 || y >= side) return;
    auto* p = &rgb[(static_cast<std::size_t>(y) * side + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  void disk(double x, double y, double r, const std::array<std::uint8_t, 3>& c) {
    double px, py;
    to_px(x, y, px, py);
    const int r_i = static_cast<int>(std::ceil(r));
    for (int dy = -r_i; dy <= r_i; ++dy) {
      for (int dx = -r_i; dx <= r_i; ++dx) {
        if (dx * dx + dy * dy <= r * r) {
          set(static_cast<int>(std::lround(px)) + dx, static_cast<int>(std::lround(py)) + dy, c);
        }
      }
    }
  }

  void star(double x, double y, const std::array<std::uint8_t, 3>& c) {
    double px, py;
    to_px(x, y, px, py);
    const int cx = static_cast<int>(std::lround(px));
    const int cy = static_cast<int>(std::lround(py));
    for (int d = -7; d <= 7; ++d) {
      set(cx + d, cy, c);
      set(cx, cy + d, c);
      if (std::abs(d) <= 5) {
        set(cx + d, cy + d, c);
        set(cx + d, cy - d, c);
      }
    }
  }
};

std::string svg_star(double cx, double cy, const char* fill) {
  char buf[512];
  std::string path;
  for (int i = 0; i < 10; ++i) {
    const double r = (i % 2 == 0) ? 9.0 : 3.8;
    const double a = -M_PI / 2.0 + i * M_PI / 5.0;
    std::snprintf(buf, sizeof(buf), "%c%.1f,%.1f", i == 0 ? 'M' : 'L', cx + r * std::cos(a),
                  cy + r * std::sin(a));
    path += buf;
  }
  path += "Z";
  std::snprintf(buf, sizeof(buf), "<path d=\"%s\" fill=\"%s\" stroke=\"#333\"/>\n", path.c_str(),
                fill);
  return buf;
}

void write_scatter(const std::vector<PerFrameRecord>& recs, const std::filesystem::path& base,
                   const std::function<std::array<std::uint8_t, 3>(const PerFrameRecord&)>& color) {
  const Bounds b = data_bounds(recs);
  const int side = 800;

  // SVG
  std::ofstream svg(base.string() + ".svg");
  if (!svg) throw std::runtime_error("plot: cannot open " + base.string() + ".svg");
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << side << "\" height=\"" << side
      << "\" viewBox=\"0 0 " << side << " " << side << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  Canvas canvas(side, b);
  char buf[256];
  for (const auto& r : recs) {
    const auto c = color(r);
    double px, py;
    canvas.to_px(r.truth.x, r.truth.y, px, py);
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"2.2\" fill=\"rgb(%d,%d,%d)\"/>\n", px, py,
                  c[0], c[1], c[2]);
    svg << buf;
    canvas.disk(r.truth.x, r.truth.y, 2.2, c);
  }
  if (!recs.empty()) {
    double px, py;
    canvas.to_px(recs.front().truth.x, recs.front().truth.y, px, py);
    svg << svg_star(px, py, "#ffcc00");
    canvas.star(recs.front().truth.x, recs.front().truth.y, {255, 170, 0});
  }
  svg << "</svg>\n";

  write_png_rgb8(base.string() + ".png", side, side, canvas.rgb);
}

}  // namespace

void plot_trajectory(const std::vector<PerFrameRecord>& records,
                     const std::filesystem::path& base) {
  write_scatter(records, base, [](const PerFrameRecord& r) { return success_color(r.success); });
}

void plot_yaw_heatmap(const std::vector<PerFrameRecord>& records,
                      const std::filesystem::path& base, double cap_deg) {
  write_scatter(records, base,
                [cap_deg](const PerFrameRecord& r) { return heat_color(r.e_y_deg, cap_deg); });
}

}  // namespace bevloc
