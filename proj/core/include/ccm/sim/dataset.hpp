#pragma once

#include "ccm/config.hpp"
#include "ccm/sim/env.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ccm::sim {

/// One timestep of sensor input, normalized.
struct Observation {
    std::vector<double> rgb;     // 3x32x32 in [0,1]
    std::vector<double> depth;   // 32x32 in [0,1]
    std::vector<double> force;   // 32x6 in [-1,1], row 31 most recent
    std::vector<double> proprio; // pos, vel in [-1,1]
    std::vector<double> action;  // displacement applied at this step
};

/// Self-supervision targets for one timestep.
struct Labels {
    std::vector<double> flow;      // 2x32x32 pixel displacement (u plane, then v plane)
    std::vector<double> flow_mask; // 32x32 peg occupancy at t
    Vec3 next_ee_pos{};
    bool next_contact = false;
    bool paired = true;
    /// Noise-free expert action at this state; the behavior-cloning target.
    Vec3 expert_action{};
};

/// Ground truth that is not a model input.
struct FrameMeta {
    Vec3 ee_pos{};
    bool in_contact = false;
};

struct Frame {
    Observation obs;
    Labels labels;
    FrameMeta meta;
};

struct EpisodeRecord {
    std::vector<Frame> frames;
    bool success = false;
    int horizon = 0;
    std::uint64_t seed = 0;
};

struct EpisodeInfo {
    std::size_t start = 0;
    std::size_t length = 0;
    bool success = false;
    std::uint64_t seed = 0;
};

struct Split {
    std::vector<Frame> frames;
    std::vector<EpisodeInfo> episodes;

    std::size_t size() const { return frames.size(); }
    bool empty() const { return frames.empty(); }
    void append(EpisodeRecord episode);
};

/// Train-split statistics used to normalize every split and live observations.
struct NormStats {
    std::array<double, kWrenchDims> force_lo{};
    std::array<double, kWrenchDims> force_hi{};
    std::array<bool, kWrenchDims> force_degenerate{};
    std::array<double, kProprioSize> proprio_lo{};
    std::array<double, kProprioSize> proprio_hi{};
    std::array<bool, kProprioSize> proprio_degenerate{};
    /// OR of peg occupancy over all train frames.
    std::vector<double> robot_mask;

    double encode_force(std::size_t dim, double raw) const;
    double encode_proprio(std::size_t dim, double raw) const;
    /// Normalized encoding of a zero sensor reading, per wrench dimension.
    std::array<double, kWrenchDims> zero_wrench_encoding() const;
};

struct Dataset {
    Split train;
    Split val;
    Split test;
    NormStats stats;
    std::string config_text;
    std::string config_hash;
    std::uint64_t seed = 0;

    const Split& split(const std::string& name) const;
};

enum class SplitId : std::uint64_t { train = 0, val = 1, test = 2 };

/// Build an observation from the simulator state. `action` is recorded as-is.
Observation make_observation(const EnvState& state, const SimConfig& cfg, const NormStats& stats,
                             const Vec3& action = {});

/// Roll out the noisy expert for one episode and return raw (unnormalized)
/// force and proprio buffers; normalize_split() finishes the job.
EpisodeRecord rollout_expert_episode(std::uint64_t seed, const Config& cfg);

/// Expert episodes for one split; each episode's seed is derived from
/// (data.seed, split, index), so splits are independent of each other's sizes.
Split generate_raw_split(const Config& cfg, SplitId which);

/// Percentile clipping statistics (3rd/97th) for force, min-max for proprio,
/// and the robot mask, all from the raw train split.
NormStats compute_stats(const Split& raw_train);
void normalize_split(Split& split, const NormStats& stats);

Dataset generate_dataset(const Config& cfg);

/// Linear-interpolated percentile (q in [0,100]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

/// Copy of `sample` whose rgb comes from a pool frame with the peg at least
/// `min_distance` away; marks it unpaired. Throws after `max_draws` misses.
Frame make_unpaired(const Frame& sample, const Split& pool, std::uint64_t seed, double min_distance = 0.15,
                    int max_draws = 1000);

/// Number of float64 values per frame in the on-disk layout.
inline constexpr std::size_t kFrameRecordSize = kRgbSize + kPixels + kForceSize + kProprioSize + kActionSize +
                                                2 * kPixels + kPixels + 3 + 1 + 1 + 3 + 3 + 1;

/// Normalization statistics as a JSON object (used by checkpoints too).
std::string stats_json_text(const NormStats& stats);
NormStats stats_from_json_text(const std::string& text);

void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

} // namespace ccm::sim
