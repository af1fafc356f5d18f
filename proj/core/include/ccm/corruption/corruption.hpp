#pragma once

// Sensor corruptions used for detector calibration and corrupted rollouts.
// Pixel sizes are in 32px raster units.

#include "ccm/config.hpp"
#include "ccm/model/modality.hpp"
#include "ccm/rng.hpp"
#include "ccm/sim/dataset.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ccm::corruption {

enum class Kind : std::uint8_t { box_occlusion, brightness, rotation, blackout_force, gauss_noise };

std::string_view kind_name(Kind k);
Kind parse_kind(std::string_view text);

/// Whether `kind` may be applied to modality `m`.
bool legal(model::Modality m, Kind kind);
std::vector<Kind> legal_kinds(model::Modality m);

struct CorruptionSpec {
    model::Modality modality = model::Modality::rgb;
    Kind kind = Kind::box_occlusion;
    std::uint64_t seed = 0;
    int box_side = 0;           // box_occlusion, pixels
    int box_dx = 0;             // box_occlusion, offset of the box centre from the peg, pixels
    int box_dy = 0;
    double brightness = 1.0;    // brightness factor
    double angle_deg = 0.0;     // rotation, signed
    int blackout_steps = 0;     // blackout_force, recorded for reports
    double noise_variance = 0.0; // gauss_noise

    std::string to_json() const;
    static CorruptionSpec from_json(const std::string& text);
};

/// Uniform over the legal kinds for `m`, parameters from the configured ranges.
CorruptionSpec sample_spec(model::Modality m, Rng& rng, const CorruptionConfig& cfg);
/// Parameters only, for a fixed kind.
CorruptionSpec sample_spec(model::Modality m, Kind kind, Rng& rng, const CorruptionConfig& cfg);

/// Everything apply() needs besides the observation itself.
struct ApplyContext {
    /// Normalized encoding of a zero wrench reading, per wrench dimension.
    std::array<double, sim::kWrenchDims> zero_wrench{};
};

ApplyContext make_context(const sim::NormStats& stats);

/// Corrupt one modality of `obs`; every other buffer is returned unchanged.
sim::Observation apply(const CorruptionSpec& spec, const sim::Observation& obs, const ApplyContext& ctx);

/// Pixel centre (column, row) of the red peg pixels in an rgb raster; the
/// raster centre when no peg pixel is visible.
std::array<double, 2> peg_pixel_center(const std::vector<double>& rgb);

} // namespace ccm::corruption
