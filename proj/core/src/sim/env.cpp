#include "ccm/sim/env.hpp"

#include <algorithm>
#include <cmath>

namespace ccm::sim {

namespace {

constexpr double kAlignTolerance = 0.005;

double overlap(double a0, double a1, double b0, double b1)
{
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

} // namespace

EnvState reset(std::uint64_t seed)
{
    EnvState s;
    Rng rng(derive_seed(seed, {0}));
    std::uniform_real_distribution<double> xy(0.2, 0.8);
    std::uniform_real_distribution<double> z(0.5, 0.7);
    std::uniform_real_distribution<double> hole(0.35, 0.65);
    s.peg_pos = {xy(rng), xy(rng), z(rng)};
    s.hole_center = {hole(rng), hole(rng)};
    s.noise.seed(derive_seed(seed, {1}));
    return s;
}

Vec3 clip_action(const Vec3& action, const SimConfig& cfg)
{
    Vec3 a{};
    for (std::size_t i = 0; i < 3; ++i) {
        a[i] = std::isfinite(action[i]) ? std::clamp(action[i], -cfg.max_action, cfg.max_action) : 0.0;
    }
    return a;
}

bool footprint_in_hole(double x, double y, const std::array<double, 2>& hole, const SimConfig& cfg)
{
    const double offset = std::max(std::abs(x - hole[0]), std::abs(y - hole[1]));
    return offset + cfg.peg_half_width <= cfg.hole_half_width + 1e-12;
}

StepResult step(const EnvState& state, const Vec3& action, const SimConfig& cfg)
{
    StepResult r{state, {}, false};
    EnvState& s = r.state;
    const Vec3 a = clip_action(action, cfg);
    const Vec3 cur = state.peg_pos;
    Vec3 next{};
    for (std::size_t i = 0; i < 3; ++i) {
        next[i] = std::clamp(cur[i] + a[i], 0.0, 1.0);
    }

    double penetration = 0.0;
    bool contact = false;
    if (cur[2] >= cfg.z_table) {
        if (next[2] < cfg.z_table && !footprint_in_hole(next[0], next[1], s.hole_center, cfg)) {
            penetration = cfg.z_table - next[2];
            next[2] = cfg.z_table;
            contact = true;
        }
    } else {
        // Below the surface the hole walls confine the peg laterally.
        const double slack = cfg.hole_half_width - cfg.peg_half_width;
        for (std::size_t i = 0; i < 2; ++i) {
            const double lo = s.hole_center[i] - slack;
            const double hi = s.hole_center[i] + slack;
            if (next[i] < lo || next[i] > hi) {
                next[i] = std::clamp(next[i], lo, hi);
                contact = true;
            }
        }
    }

    std::normal_distribution<double> force_noise(0.0, cfg.force_noise_std);
    std::normal_distribution<double> torque_noise(0.0, cfg.torque_noise_std);
    Wrench w{};
    w[0] = force_noise(s.noise);
    w[1] = force_noise(s.noise);
    w[2] = force_noise(s.noise);
    w[3] = torque_noise(s.noise);
    w[4] = torque_noise(s.noise);
    w[5] = torque_noise(s.noise);
    if (contact) {
        w[0] += -cfg.friction_gain * a[0];
        w[1] += -cfg.friction_gain * a[1];
        w[2] += cfg.contact_stiffness * penetration;
    }

    for (std::size_t i = 0; i < 3; ++i) {
        s.peg_vel[i] = next[i] - cur[i];
    }
    s.peg_pos = next;
    s.in_contact = contact;
    s.step_index = state.step_index + 1;
    std::rotate(s.wrench_history.begin(), s.wrench_history.begin() + 1, s.wrench_history.end());
    s.wrench_history.back() = w;
    s.success = next[2] <= cfg.success_depth &&
                std::abs(next[0] - s.hole_center[0]) <= cfg.success_tolerance &&
                std::abs(next[1] - s.hole_center[1]) <= cfg.success_tolerance;
    r.wrench = w;
    r.contact = contact;
    return r;
}

Raster render(const EnvState& state, const SimConfig& cfg)
{
    constexpr double cell = 1.0 / static_cast<double>(kImageSize);
    Raster r;
    r.rgb.assign(kRgbSize, 0.0);
    r.depth.assign(kPixels, 0.0);
    const double hx0 = state.hole_center[0] - cfg.hole_half_width;
    const double hx1 = state.hole_center[0] + cfg.hole_half_width;
    const double hy0 = state.hole_center[1] - cfg.hole_half_width;
    const double hy1 = state.hole_center[1] + cfg.hole_half_width;
    const auto& p = state.peg_pos;
    for (std::size_t i = 0; i < kImageSize; ++i) {
        const double y0 = static_cast<double>(i) * cell;
        const double yc = y0 + 0.5 * cell;
        for (std::size_t j = 0; j < kImageSize; ++j) {
            const double x0 = static_cast<double>(j) * cell;
            const double xc = x0 + 0.5 * cell;
            const std::size_t px = i * kImageSize + j;
            // Hole edges are area-sampled so its centre is recoverable below pixel size.
            const double cover = overlap(x0, x0 + cell, hx0, hx1) * overlap(y0, y0 + cell, hy0, hy1) /
                                 (cell * cell);
            double gray = 0.6 + (0.1 - 0.6) * cover;
            double height = cfg.z_table * (1.0 - cover);
            std::array<double, 3> color{gray, gray, gray};
            if (std::abs(xc - p[0]) <= cfg.peg_half_width && std::abs(yc - p[1]) <= cfg.peg_half_width) {
                color = {1.0, 0.1, 0.1};
                height = p[2];
            }
            for (std::size_t c = 0; c < 3; ++c) {
                r.rgb[c * kPixels + px] = color[c];
            }
            r.depth[px] = std::clamp(height / cfg.depth_far, 0.0, 1.0);
        }
    }
    return r;
}

Vec3 expert_action(const EnvState& state, const SimConfig& cfg)
{
    const double dx = state.hole_center[0] - state.peg_pos[0];
    const double dy = state.hole_center[1] - state.peg_pos[1];
    if (std::abs(dx) > kAlignTolerance || std::abs(dy) > kAlignTolerance) {
        return clip_action({dx, dy, 0.0}, cfg);
    }
    return {0.0, 0.0, -cfg.max_action};
}

std::vector<double> peg_occupancy(const Vec3& peg_pos, const SimConfig& cfg)
{
    constexpr double cell = 1.0 / static_cast<double>(kImageSize);
    std::vector<double> mask(kPixels, 0.0);
    for (std::size_t i = 0; i < kImageSize; ++i) {
        const double yc = (static_cast<double>(i) + 0.5) * cell;
        for (std::size_t j = 0; j < kImageSize; ++j) {
            const double xc = (static_cast<double>(j) + 0.5) * cell;
            if (std::abs(xc - peg_pos[0]) <= cfg.peg_half_width &&
                std::abs(yc - peg_pos[1]) <= cfg.peg_half_width) {
                mask[i * kImageSize + j] = 1.0;
            }
        }
    }
    return mask;
}

std::vector<double> sensor_window(const EnvState& state, const SimConfig& cfg)
{
    std::vector<double> out(kForceSize);
    for (std::size_t t = 0; t < kForceSteps; ++t) {
        for (std::size_t k = 0; k < kWrenchDims; ++k) {
            out[t * kWrenchDims + k] = state.wrench_history[t][k] + cfg.sensor_offset[k];
        }
    }
    return out;
}

} // namespace ccm::sim
