#pragma once

// detect -> reject -> correct: the latent code a policy consumes.

#include "ccm/detector/detector.hpp"
#include "ccm/model/fusion.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ccm::pipeline {

enum class Mode : std::uint8_t { full, detect_correct, no_correct };

std::string_view mode_name(Mode m);

/// Posterior of the fusion of every modality except `drop`. No sample drawn.
model::LatentCode encode_with_missing(const sim::Observation& obs, const model::FusionModel& model,
                                      std::optional<model::Modality> drop);

struct Compensated {
    model::LatentCode code;
    detector::DetectionResult detection;
};

/// full/no_correct: full fusion, detection computed when a calibrated table is
/// given but never acted on. detect_correct: re-fuse without the rejected
/// modality, if any.
Compensated compensate(const sim::Observation& obs, const model::FusionModel& model,
                       const detector::ThresholdTable& table, Mode mode);

/// compensate() for many observations; encoders run once per batch.
std::vector<Compensated> compensate_batch(std::span<const sim::Observation* const> observations,
                                          const model::FusionModel& model, const detector::ThresholdTable& table,
                                          Mode mode);

struct LatentShift {
    model::Modality dropped = model::Modality::rgb;
    double mean_l2 = 0.0;
    double std_l2 = 0.0;
    std::size_t frames = 0;
};

/// Per droppable modality, ||mu_full - mu_drop||_2 over every frame of `split`.
std::vector<LatentShift> latent_shift(const sim::Split& split, const model::FusionModel& model);

std::string latent_shift_csv(const std::vector<LatentShift>& rows, const std::string& config_hash,
                             std::uint64_t seed);

} // namespace ccm::pipeline
