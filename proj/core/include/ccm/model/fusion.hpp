#pragma once

// Per-modality Gaussian encoders, product-of-experts fusion with a unit
// Gaussian prior expert, decoders, and the self-supervised prediction heads.

#include "ccm/config.hpp"
#include "ccm/model/modality.hpp"
#include "ccm/numerics/nn.hpp"
#include "ccm/rng.hpp"
#include "ccm/sim/dataset.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ccm::model {

struct GaussianExpert {
    std::vector<double> mean;
    std::vector<double> variance;
};

struct LatentCode {
    std::vector<double> mean;
    std::vector<double> variance;
    std::optional<std::vector<double>> sample;
    ModalitySet fused_modalities;
};

/// Precision-weighted product of the given experts and an N(0, I) prior:
/// var = 1 / (1 + sum 1/var_i), mean = var * sum mean_i / var_i.
LatentCode fuse_poe(const std::vector<GaussianExpert>& experts);

/// mean + sqrt(variance) * eps with eps drawn from a stream seeded by `seed`.
LatentCode reparameterize(const LatentCode& code, std::uint64_t seed);

// --- batched, differentiable form -----------------------------------------

struct ExpertBatch {
    nx::Tensor mean;   // [B,d]
    nx::Tensor logvar; // [B,d], clamped
};

struct FusedBatch {
    nx::Tensor mean;     // [B,d]
    nx::Tensor variance; // [B,d]
    ModalitySet modalities;
};

using ExpertSet = std::array<ExpertBatch, kModalities.size()>;

/// Same product as fuse_poe, on tensors, over the members of `subset` in
/// canonical order. Subsets without proprio are rejected.
FusedBatch fuse(const ExpertSet& experts, ModalitySet subset);

/// mean + sqrt(variance) * eps, eps ~ N(0, I) from `rng`.
nx::Tensor reparameterize(const FusedBatch& code, Rng& rng);

/// Model inputs for B observations, one row each.
struct InputBatch {
    nx::Tensor rgb;     // [B,3072]
    nx::Tensor depth;   // [B,1024]
    nx::Tensor force;   // [B,192]
    nx::Tensor proprio; // [B,6]
    nx::Tensor action;  // [B,3]

    std::size_t rows() const { return proprio.dim(0); }
    const nx::Tensor& get(Modality m) const;
};

InputBatch stack_inputs(std::span<const sim::Observation* const> observations);

/// Flow-head outputs at robot-mask pixels only (outside the mask the peg never
/// appears in training data, so flow is 0 and occupancy is false there).
struct FlowPrediction {
    nx::Tensor flow;        // [B, 2|mask|], u values then v values
    nx::Tensor mask_logits; // [B, |mask|]
};

/// Full-raster flow (2x32x32) and occupancy logits (32x32) for one row of a
/// FlowPrediction. Pixels outside the mask get flow 0 and logit `outside_logit`.
struct FlowRaster {
    std::vector<double> flow;
    std::vector<double> mask_logits;
};

/// Full and masked reconstructions of one modality for a single latent.
struct Reconstruction {
    std::vector<double> full;
    /// rgb/depth only: masked-region raster, zero outside the robot mask.
    std::vector<double> masked;
};

struct LayerInfo {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

/// Fixed per-feature affine on an encoder input: (x - shift) * scale.
/// Empty vectors mean identity.
struct InputStandardization {
    std::vector<double> shift;
    std::vector<double> scale;
};

class FusionModel {
public:
    /// Builds and initializes every network from cfg.seed. `robot_mask` (1024
    /// values, nonzero = inside) fixes the masked-decoder output size.
    FusionModel(const ModelConfig& cfg, std::vector<double> robot_mask, bool zero_force_input = false);

    FusionModel(FusionModel&&) = default;
    FusionModel& operator=(FusionModel&&) = default;
    FusionModel(const FusionModel&) = delete;
    FusionModel& operator=(const FusionModel&) = delete;

    std::size_t latent_dim() const { return latent_dim_; }
    const ModelConfig& config() const { return cfg_; }
    bool zero_force_input() const { return zero_force_; }
    const std::vector<double>& robot_mask() const { return robot_mask_; }
    /// Pixel indices inside the robot mask, ascending.
    const std::vector<std::size_t>& mask_pixels() const { return mask_pixels_; }

    void set_input_standardization(Modality m, InputStandardization s);
    const InputStandardization& input_standardization(Modality m) const { return input_std_[index_of(m)]; }

    static std::size_t input_size(Modality m);
    /// Number of reconstructed values: force keeps fx, fy, fz only.
    static std::size_t output_size(Modality m);
    static std::size_t channels(Modality m);

    ExpertBatch encode(Modality m, const nx::Tensor& x) const;
    ExpertSet encode_all(const InputBatch& in) const;
    FusedBatch encode_fuse(const InputBatch& in, ModalitySet subset = ModalitySet::all()) const;

    nx::Tensor decode(Modality m, const nx::Tensor& z) const;
    /// rgb/depth: reconstruction at robot-mask pixels only, [B, channels * |mask|],
    /// channel-major.
    nx::Tensor decode_masked(Modality m, const nx::Tensor& z) const;

    FlowPrediction predict_flow(const nx::Tensor& z, const nx::Tensor& action) const;
    nx::Tensor predict_ee(const nx::Tensor& z, const nx::Tensor& action) const;
    nx::Tensor predict_contact(const nx::Tensor& z, const nx::Tensor& action) const;
    nx::Tensor predict_pairing(const nx::Tensor& z) const;

    // single-sample conveniences (no graph)
    GaussianExpert encode_modality(Modality m, std::span<const double> x) const;
    Reconstruction decode_modality(std::span<const double> z, Modality m) const;
    FlowRaster predict_flow_raster(std::span<const double> z, std::span<const double> action,
                                   double outside_logit = -20.0) const;

    /// Values of a full raster (channel-major, `channels` planes) at the mask pixels.
    std::vector<double> gather_mask(std::span<const double> raster, std::size_t channels) const;

    std::vector<nx::Parameter*> parameters();
    std::vector<const nx::Parameter*> parameters() const;
    std::vector<LayerInfo> layers() const;
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(std::span<const double> values);

private:
    struct ImageDecoder {
        nx::Mlp trunk;
        nx::Linear full;
        nx::Linear masked;
    };

    const ImageDecoder* image_decoder(Modality m) const;
    static std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

    ModelConfig cfg_;
    std::size_t latent_dim_ = 0;
    bool zero_force_ = false;
    std::vector<double> robot_mask_;
    std::vector<std::size_t> mask_pixels_;
    std::array<InputStandardization, kModalities.size()> input_std_{};

    std::array<nx::Mlp, kModalities.size()> encoders_;
    ImageDecoder rgb_decoder_;
    ImageDecoder depth_decoder_;
    nx::Mlp force_decoder_;
    nx::Mlp proprio_decoder_;
    nx::Mlp flow_trunk_;
    nx::Linear flow_out_;
    nx::Linear flow_mask_out_;
    nx::Mlp ee_head_;
    nx::Mlp contact_head_;
    nx::Mlp pairing_head_;
};

/// A trained representation model plus what is needed to feed it live data.
struct Checkpoint {
    Config config;
    sim::NormStats stats;
    FusionModel model;
};

/// Directory with manifest.json (layers, d, modalities, config + hash,
/// normalization) and params.bin (little-endian float64 in manifest order).
void save_checkpoint(const std::filesystem::path& dir, const FusionModel& model, const Config& cfg,
                     const sim::NormStats& stats);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Per-pixel mean and 1 / max(std, floor) of a modality over a split.
InputStandardization fit_standardization(const sim::Split& split, Modality m, double std_floor);

} // namespace ccm::model
