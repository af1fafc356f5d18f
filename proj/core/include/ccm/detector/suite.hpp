#pragma once

// Corrupted copies of a split, calibration on the validation split, and the
// per-corruption AUROC / replace-key report.

#include "ccm/corruption/corruption.hpp"
#include "ccm/detector/detector.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ccm::detector {

/// Every observation of `split` with modality `m` corrupted by an independent
/// draw. `kind` fixes the corruption kind, `noise_variance` the gauss_noise
/// variance; otherwise both are sampled.
std::vector<sim::Observation> corrupt_split(const sim::Split& split, model::Modality m,
                                            std::optional<corruption::Kind> kind,
                                            std::optional<double> noise_variance, const Config& cfg,
                                            const sim::NormStats& stats, std::uint64_t seed);

std::vector<Scores> score_split(const sim::Split& split, const model::FusionModel& model);
std::vector<Scores> score_observations(const std::vector<sim::Observation>& obs, const model::FusionModel& model);

/// Thresholds from clean vs corrupted validation frames, tie-break statistics
/// from the clean training frames.
ThresholdTable calibrate_on(const sim::Dataset& data, const model::FusionModel& model, const Config& cfg,
                            std::uint64_t seed);

struct SuiteRow {
    std::string modality;
    std::string kind;
    std::string param;
    double auroc = 0.0;
    /// Fraction of corrupted frames whose rejected modality is the corrupted one.
    double replace_key_accuracy = 0.0;
    std::size_t frames = 0;
};

/// One row per (modality, kind) and per gauss_noise variance, plus a "clean"
/// row whose accuracy column is the fraction of clean frames left untouched.
std::vector<SuiteRow> evaluate_suite(const sim::Split& split, const model::FusionModel& model,
                                     const ThresholdTable& table, const Config& cfg, const sim::NormStats& stats,
                                     std::uint64_t seed);

std::string suite_csv(const std::vector<SuiteRow>& rows, const std::string& config_hash, std::uint64_t seed);

} // namespace ccm::detector
