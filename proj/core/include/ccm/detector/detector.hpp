#pragma once

// Reconstruction-error OOD detection: per-channel scores, AUROC, Youden-J
// thresholds, and the rejection rule (2-of-3 force dims, z-score tie-break).

#include "ccm/model/fusion.hpp"
#include "ccm/sim/dataset.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ccm::detector {

inline constexpr std::size_t kForceDims = 3;

/// Reconstruction errors of one observation. rgb/depth are L2 over the full
/// raster; force holds one L2 over the 32-step window per reconstructed dim.
struct Scores {
    double rgb = 0.0;
    double depth = 0.0;
    std::array<double, kForceDims> force{};
};

/// Encode all modalities, fuse, decode from the posterior mean, compare.
Scores recon_error(const sim::Observation& obs, const model::FusionModel& model);
/// Same as recon_error for many observations at once.
std::vector<Scores> recon_errors(std::span<const sim::Observation* const> observations,
                                 const model::FusionModel& model, std::size_t chunk = 256);

/// P(corrupt score > clean score) with ties counted 1/2, as the trapezoidal
/// area under the ROC curve.
double auroc(std::span<const double> clean, std::span<const double> corrupt);

struct Cut {
    double threshold = 0.0;
    double youden_j = 0.0;
};

/// Threshold maximizing TPR - FPR for the rule "score > threshold is
/// corrupt". Picks the midpoint of the maximizing gap; the lowest gap wins ties.
Cut youden_threshold(std::span<const double> clean, std::span<const double> corrupt);

struct ChannelStats {
    double mean = 0.0;
    double std = 1.0;
};

struct ThresholdTable {
    bool calibrated = false;
    double rgb = 0.0;
    double depth = 0.0;
    std::array<double, kForceDims> force{};
    ChannelStats rgb_stats;
    ChannelStats depth_stats;
    std::array<ChannelStats, kForceDims> force_stats{};
    double rgb_auroc = 0.0;
    double depth_auroc = 0.0;
    double force_auroc = 0.0;
    std::array<double, kForceDims> force_dim_auroc{};
    std::string config_hash;
    std::uint64_t seed = 0;

    std::string to_json() const;
    static ThresholdTable from_json(const std::string& text);
};

struct DetectionResult {
    Scores scores;
    bool rgb_flag = false;
    bool depth_flag = false;
    bool force_flag = false;
    std::array<bool, kForceDims> force_dim_flags{};
    /// z-scores of flagged modalities, against train-set error statistics.
    std::optional<double> rgb_z;
    std::optional<double> depth_z;
    std::optional<double> force_z;
    std::optional<model::Modality> rejected;

    bool flagged(model::Modality m) const;
    std::string to_json() const;
};

/// Apply the detection rule to precomputed scores.
DetectionResult detect(const Scores& scores, const ThresholdTable& table);
DetectionResult detect(const sim::Observation& obs, const model::FusionModel& model, const ThresholdTable& table);

/// Force modality-level score used for AUROC: the second largest of the
/// per-dim score/threshold ratios, so that it crosses 1 exactly when the
/// 2-of-3 rule fires.
double force_modality_score(const Scores& s, const ThresholdTable& table);

/// Score channel by name: "rgb", "depth", "force0".."force2".
std::vector<double> channel(std::span<const Scores> scores, const std::string& name);

ChannelStats mean_std(std::span<const double> values);

struct CalibrationInput {
    std::vector<Scores> clean;        // clean validation frames
    std::vector<Scores> rgb_corrupt;  // validation frames with rgb corrupted
    std::vector<Scores> depth_corrupt;
    std::vector<Scores> force_corrupt;
    std::vector<Scores> train;        // clean training frames, for tie-break stats
};

ThresholdTable calibrate(const CalibrationInput& input);

} // namespace ccm::detector
