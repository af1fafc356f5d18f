#pragma once

#include "ccm/config.hpp"
#include "ccm/model/fusion.hpp"
#include "ccm/numerics/adam.hpp"
#include "ccm/sim/dataset.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ccm::training {

enum class Term : std::size_t {
    recon,
    recon_mask,
    kl,
    flow,
    flow_mask,
    ee_pos,
    contact,
    pairing,
    latent_dist,
};

inline constexpr std::size_t kTermCount = 9;
std::string_view term_name(Term t);

/// Weighted loss terms of one step (or their average over an epoch).
struct LossReport {
    std::array<double, kTermCount> terms{};
    double total = 0.0;

    double operator[](Term t) const { return terms[static_cast<std::size_t>(t)]; }
    double& operator[](Term t) { return terms[static_cast<std::size_t>(t)]; }
    /// Recompute total as the sum of terms, in declaration order.
    void sum_terms();
};

/// What a single step trains on: paired frames plus unpaired copies used only
/// by the pairing head.
struct StepBatch {
    std::vector<const sim::Frame*> paired;
    std::vector<sim::Frame> negatives;
};

struct StepOptions {
    LossWeights weights;
    double l1_weight = 0.2;
    double drop_rate = 1.0;
    bool detach_full_target = false;
    /// Forces the dropped modality instead of drawing one (tests, evaluation).
    std::optional<model::Modality> drop;
};

StepOptions step_options(const Config& cfg);

/// Forward both passes and return the weighted terms plus the differentiable
/// total. Terms with zero weight are skipped and reported as exactly 0.
struct StepLosses {
    LossReport report;
    nx::Tensor total;
};
StepLosses compute_losses(const model::FusionModel& model, const StepBatch& batch, const StepOptions& options,
                          Rng& rng);

/// compute_losses, backward, one Adam update.
LossReport training_step(model::FusionModel& model, const StepBatch& batch, const StepOptions& options,
                         const nx::AdamOptions& adam, Rng& rng);

/// Sampling weight per frame, proportional to 1 / frequency of its contact class.
std::vector<double> contact_balance_weights(const sim::Split& split);

struct EpochLoss {
    int epoch = 0;
    std::string split;
    LossReport report;
};

struct TrainResult {
    model::FusionModel model;
    std::vector<EpochLoss> history;
};

/// Train a fresh model on data.train, evaluating on data.val after every
/// epoch. Fully determined by cfg.
TrainResult train(const sim::Dataset& data, const Config& cfg, std::ostream* progress = nullptr);

/// Average weighted losses over a split without updating the model.
LossReport evaluate_losses(const model::FusionModel& model, const sim::Split& split, const sim::Split& pool,
                           const Config& cfg, std::uint64_t seed);

std::string loss_csv(const std::vector<EpochLoss>& history, const std::string& config_hash, std::uint64_t seed);

} // namespace ccm::training
