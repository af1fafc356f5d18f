#pragma once

// Run configuration. One human-readable `key = value` file drives every
// stage; anything not set in the file keeps the default below. See
// configs/desk.cfg for the documented schema.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ccm {

struct SimConfig {
    double z_table = 0.2;
    double hole_half_width = 0.05;
    double peg_half_width = 0.04;
    double max_action = 0.02;
    double contact_stiffness = 500.0;
    double friction_gain = 50.0;
    double force_noise_std = 0.01;
    double torque_noise_std = 0.005;
    /// Constant tool load seen by the wrist sensor on top of contact wrenches.
    std::array<double, 6> sensor_offset{1.5, -1.5, -2.0, 0.0, 0.0, 0.0};
    int horizon = 200;
    double success_depth = 0.15;
    double success_tolerance = 0.01;
    double depth_far = 0.7;
};

struct DataConfig {
    int n_train = 200;
    int n_val = 40;
    int n_test = 40;
    std::uint64_t seed = 1;
    double expert_noise = 0.005;
    double unpaired_min_distance = 0.15;
    int unpaired_max_draws = 1000;
};

struct ModelConfig {
    std::size_t latent_dim = 32;
    std::vector<std::size_t> encoder_hidden{256, 128};
    std::vector<std::size_t> decoder_hidden{128, 128};
    std::vector<std::size_t> flow_hidden{128, 128};
    std::vector<std::size_t> head_hidden{64};
    double logvar_min = -8.0;
    double logvar_max = 8.0;
    /// Standardize encoder inputs per pixel with train-split stats.
    bool standardize_rgb = true;
    bool standardize_depth = true;
    /// Lower bounds on the per-pixel scale denominators.
    double rgb_std_floor = 0.1;
    double depth_std_floor = 0.1;
    std::uint64_t seed = 11;
};

/// Weights of the representation loss terms.
struct LossWeights {
    double flow = 50.0;
    double flow_mask = 1.0;
    double ee_pos = 1.0;
    double next_contact = 1.0;
    double pairing = 1.0;
    double kl = 0.001;
    double recon = 1.0;
    double recon_mask = 10.0;
    double latent_dist = 1.0;
    /// Weight of the L1 part of the modality reconstruction loss.
    double recon_l1 = 0.2;
};

struct AblationFlags {
    bool no_latent_dist = false;
    bool recon_only = false;
    bool ss_only = false;
    bool zero_force = false;
};

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch = 64;
    int epochs = 30;
    std::uint64_t seed = 7;
    double drop_rate = 1.0;
    double pairing_rate = 0.5;
    bool detach_full_target = false;
    bool contact_balance = true;
    AblationFlags ablation;
};

struct CorruptionConfig {
    int box_min = 7;
    int box_max = 15;
    int box_jitter = 6;
    double brightness_min = 0.8;
    double brightness_max = 1.0;
    double rotation_min_deg = 10.0;
    double rotation_max_deg = 30.0;
    int blackout_steps = 20;
    std::vector<double> noise_vars{0.5, 0.25, 0.1};
    std::uint64_t calibration_seed = 5;
};

struct PolicyConfig {
    std::vector<std::size_t> hidden{64, 64};
    double lr = 1e-3;
    int epochs = 60;
    int batch = 64;
    std::uint64_t seed = 13;
    double log_std_min = -5.0;
    double log_std_max = 1.0;
};

struct EvalConfig {
    int episodes = 50;
    std::uint64_t seed = 2024;
};

struct Config {
    SimConfig sim;
    DataConfig data;
    ModelConfig model;
    LossWeights loss;
    TrainConfig train;
    CorruptionConfig corruption;
    PolicyConfig policy;
    EvalConfig eval;

    /// Parse `key = value` lines on top of the defaults. Unknown keys and
    /// malformed values raise ContractError.
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    /// Every key with its current value, sorted, one `key = value` per line.
    std::string dump() const;
    /// FNV-1a 64 over dump(), as 16 hex digits.
    std::string hash() const;

    void validate() const;
};

/// Loss weights after applying ablation flags.
LossWeights effective_weights(const LossWeights& weights, const AblationFlags& flags);

} // namespace ccm
