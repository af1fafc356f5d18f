#pragma once

// Planar peg-in-hole environment on the unit-cube workspace. The peg is a
// square of half-width 0.04 moving by clipped 3-D displacements; the table
// surface sits at z_table with a square hole of half-width 0.05 cut in it.
// A fixed top-down camera renders 32x32 RGB and depth; a wrist sensor keeps
// the last 32 wrenches.

#include "ccm/config.hpp"
#include "ccm/rng.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace ccm::sim {

inline constexpr std::size_t kImageSize = 32;
inline constexpr std::size_t kPixels = kImageSize * kImageSize;
inline constexpr std::size_t kRgbSize = 3 * kPixels;
inline constexpr std::size_t kForceSteps = 32;
inline constexpr std::size_t kWrenchDims = 6;
inline constexpr std::size_t kForceSize = kForceSteps * kWrenchDims;
inline constexpr std::size_t kProprioSize = 6;
inline constexpr std::size_t kActionSize = 3;

using Vec3 = std::array<double, 3>;
using Wrench = std::array<double, kWrenchDims>;

struct EnvState {
    Vec3 peg_pos{};
    Vec3 peg_vel{};
    std::array<double, 2> hole_center{};
    bool in_contact = false;
    bool success = false;
    int step_index = 0;
    /// Contact wrenches, oldest first; row 31 is the latest. Zero-padded at reset.
    std::array<Wrench, kForceSteps> wrench_history{};
    /// Sensor-noise stream; part of the state so (seed, actions) fixes everything.
    Rng noise;
};

struct StepResult {
    EnvState state;
    Wrench wrench{};
    bool contact = false;
};

/// Top-down rasters. rgb is channel-major (3x32x32); depth is 32x32 in [0,1].
struct Raster {
    std::vector<double> rgb;
    std::vector<double> depth;
};

/// Peg uniform in [0.2,0.8]^2 x [0.5,0.7], hole centre uniform in [0.35,0.65]^2.
EnvState reset(std::uint64_t seed);

StepResult step(const EnvState& state, const Vec3& action, const SimConfig& cfg);

Raster render(const EnvState& state, const SimConfig& cfg);

/// Privileged scripted expert: align over the hole, then descend.
Vec3 expert_action(const EnvState& state, const SimConfig& cfg);

/// 1 where a pixel centre lies inside the peg footprint.
std::vector<double> peg_occupancy(const Vec3& peg_pos, const SimConfig& cfg);

/// True when the peg footprint at (x, y) fits inside the hole.
bool footprint_in_hole(double x, double y, const std::array<double, 2>& hole, const SimConfig& cfg);

/// Wrist-sensor readings (wrench history plus the constant tool load),
/// 32x6 row-major, oldest first.
std::vector<double> sensor_window(const EnvState& state, const SimConfig& cfg);

Vec3 clip_action(const Vec3& action, const SimConfig& cfg);

} // namespace ccm::sim
