#pragma once

#include <filesystem>
#include <vector>

#include "bevloc/pipeline.hpp"

namespace bevloc {

std::vector<PerFrameRecord> read_per_frame_csv(const std::filesystem::path& path);

/// Ground-truth trajectory scatter, successes red and failures black, a
/// star on the start frame. Writes <base>.svg and <base>.png.
void plot_trajectory(const std::vector<PerFrameRecord>& records,
                     const std::filesystem::path& base);

/// Trajectory colored by yaw error through a blue-to-red map clamped at
/// cap_deg. Writes <base>.svg and <base>.png.
void plot_yaw_heatmap(const std::vector<PerFrameRecord>& records,
                      const std::filesystem::path& base, double cap_deg = 5.0);

/// Color for a frame in the trajectory figure (r, g, b).
std::array<std::uint8_t, 3> success_color(bool success);

/// Blue-to-red heat color for a yaw error clamped at cap_deg.
std::array<std::uint8_t, 3> heat_color(double e_y_deg, double cap_deg);

}  // namespace bevloc
