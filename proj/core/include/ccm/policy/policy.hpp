#pragma once

// Tanh Gaussian policy on the frozen latent, behavior cloning from the scripted
// expert, and the closed-loop evaluator for normal / compensated /
// not-compensated rollouts.

#include "ccm/config.hpp"
#include "ccm/detector/detector.hpp"
#include "ccm/model/fusion.hpp"
#include "ccm/numerics/nn.hpp"
#include "ccm/sim/dataset.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ccm::policy {

/// Actions are learned in units of the env's max displacement.
class Policy {
public:
    Policy(std::size_t latent_dim, const PolicyConfig& cfg, double max_action);

    Policy(Policy&&) = default;
    Policy& operator=(Policy&&) = default;
    Policy(const Policy&) = delete;
    Policy& operator=(const Policy&) = delete;

    std::size_t latent_dim() const { return input_mean_.size(); }
    double max_action() const { return max_action_; }

    /// Per-dim standardization applied to latent means before the network.
    void set_input_stats(std::vector<double> mean, std::vector<double> std);
    const std::vector<double>& input_mean() const { return input_mean_; }
    const std::vector<double>& input_std() const { return input_std_; }

    /// Normalized action means for raw latent rows [B,d].
    nx::Tensor mean(const nx::Tensor& z) const;
    /// Clamped log-std, [1,3].
    nx::Tensor log_std() const;
    /// Mean negative log-likelihood of normalized target actions [B,3].
    nx::Tensor nll(const nx::Tensor& z, const nx::Tensor& target) const;

    /// Mean action for the posterior mean of `code`, clipped to env bounds.
    sim::Vec3 act(const model::LatentCode& code) const;
    std::vector<sim::Vec3> act_batch(const std::vector<const model::LatentCode*>& codes) const;

    std::vector<nx::Parameter*> parameters();
    std::vector<const nx::Parameter*> parameters() const;
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(std::span<const double> values);

private:
    nx::Tensor standardize(const nx::Tensor& z) const;

    PolicyConfig cfg_;
    double max_action_ = 0.02;
    std::vector<double> input_mean_;
    std::vector<double> input_std_;
    nx::Mlp net_;
    nx::Parameter log_std_;
};

struct BcEpoch {
    int epoch = 0;
    double train_nll = 0.0;
    double val_nll = 0.0;
};

struct BcResult {
    Policy policy;
    double initial_val_nll = 0.0;
    std::vector<BcEpoch> history;
};

/// Full-modality posterior means of every frame in `split`, one row each.
nx::Tensor latent_means(const sim::Split& split, const model::FusionModel& model);

/// Maximize the likelihood of the clean expert actions given full-modality
/// latent means. The representation model is only read.
BcResult bc_train(const sim::Dataset& data, const model::FusionModel& model, const Config& cfg,
                  std::ostream* progress = nullptr);

std::string bc_csv(const BcResult& result, const std::string& config_hash, std::uint64_t seed);

/// Hash of a representation parameter blob, stored with the policy.
std::string parameter_hash(std::span<const double> values);

void save_policy(const std::filesystem::path& file, const Policy& policy, const Config& cfg,
                 const std::string& representation_hash);
struct LoadedPolicy {
    Policy policy;
    std::string config_hash;
    std::string representation_hash;
};
LoadedPolicy load_policy(const std::filesystem::path& file);

// --- evaluation --------------------------------------------------------------

enum class Condition : std::uint8_t { normal, compensated, not_compensated };

std::string_view condition_name(Condition c);

struct EvalContext {
    const Policy& policy;
    const model::FusionModel& model;
    const sim::NormStats& stats;
    const detector::ThresholdTable& table;
    const Config& cfg;
};

struct EvalResult {
    Condition condition = Condition::normal;
    std::optional<model::Modality> modality;
    double success_rate = 0.0;
    std::vector<bool> successes;
    std::vector<int> steps;
};

/// Episodes run in lockstep from seeds derive_seed(seed, {episode}). When
/// `log` is set, one JSON line per episode step is written to it.
EvalResult rollout_eval(const EvalContext& ctx, Condition condition, std::optional<model::Modality> corrupt,
                        int episodes, std::uint64_t seed, std::ostream* log = nullptr);

} // namespace ccm::policy
