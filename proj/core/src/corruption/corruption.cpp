#include "ccm/corruption/corruption.hpp"

#include "ccm/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ccm::corruption {

using model::Modality;
using nlohmann::json;

namespace {

constexpr int kSize = static_cast<int>(sim::kImageSize);

std::string spec_error(Modality m, Kind k)
{
    return "corruption '" + std::string(kind_name(k)) + "' cannot be applied to modality '" +
           std::string(model::name(m)) + "'";
}

void fill_box(std::vector<double>& raster, std::size_t channels, int x0, int y0, int side)
{
    for (int i = std::max(0, y0); i < std::min(kSize, y0 + side); ++i) {
        for (int j = std::max(0, x0); j < std::min(kSize, x0 + side); ++j) {
            for (std::size_t c = 0; c < channels; ++c) {
                raster[c * sim::kPixels + static_cast<std::size_t>(i * kSize + j)] = 0.0;
            }
        }
    }
}

std::vector<double> rotate(const std::vector<double>& raster, std::size_t channels, double angle_deg)
{
    const double theta = angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double mid = (kSize - 1) / 2.0;
    std::vector<double> out(raster.size(), 0.0);
    for (int i = 0; i < kSize; ++i) {
        for (int j = 0; j < kSize; ++j) {
            // Inverse-map each output pixel into the source raster.
            const double x = j - mid;
            const double y = i - mid;
            const auto sj = static_cast<int>(std::lround(c * x + s * y + mid));
            const auto si = static_cast<int>(std::lround(-s * x + c * y + mid));
            if (sj < 0 || sj >= kSize || si < 0 || si >= kSize) {
                continue;
            }
            for (std::size_t ch = 0; ch < channels; ++ch) {
                out[ch * sim::kPixels + static_cast<std::size_t>(i * kSize + j)] =
                    raster[ch * sim::kPixels + static_cast<std::size_t>(si * kSize + sj)];
            }
        }
    }
    return out;
}

} // namespace

std::string_view kind_name(Kind k)
{
    switch (k) {
    case Kind::box_occlusion:
        return "box_occlusion";
    case Kind::brightness:
        return "brightness";
    case Kind::rotation:
        return "rotation";
    case Kind::blackout_force:
        return "blackout_force";
    case Kind::gauss_noise:
        return "gauss_noise";
    }
    throw ContractError("unknown corruption kind");
}

Kind parse_kind(std::string_view text)
{
    for (auto k : {Kind::box_occlusion, Kind::brightness, Kind::rotation, Kind::blackout_force, Kind::gauss_noise}) {
        if (kind_name(k) == text) {
            return k;
        }
    }
    throw ContractError("unknown corruption kind '" + std::string(text) + "'");
}

bool legal(Modality m, Kind kind)
{
    switch (kind) {
    case Kind::box_occlusion:
    case Kind::rotation:
        return m == Modality::rgb || m == Modality::depth;
    case Kind::brightness:
        return m == Modality::rgb;
    case Kind::blackout_force:
    case Kind::gauss_noise:
        return m == Modality::force;
    }
    return false;
}

std::vector<Kind> legal_kinds(Modality m)
{
    std::vector<Kind> out;
    for (auto k : {Kind::box_occlusion, Kind::brightness, Kind::rotation, Kind::blackout_force, Kind::gauss_noise}) {
        if (legal(m, k)) {
            out.push_back(k);
        }
    }
    if (out.empty()) {
        throw ContractError("modality '" + std::string(model::name(m)) + "' has no corruptions");
    }
    return out;
}

std::string CorruptionSpec::to_json() const
{
    json j{{"modality", std::string(model::name(modality))}, {"kind", std::string(kind_name(kind))}, {"seed", seed}};
    switch (kind) {
    case Kind::box_occlusion:
        j["box_side"] = box_side;
        j["box_dx"] = box_dx;
        j["box_dy"] = box_dy;
        break;
    case Kind::brightness:
        j["brightness"] = brightness;
        break;
    case Kind::rotation:
        j["angle_deg"] = angle_deg;
        break;
    case Kind::blackout_force:
        j["blackout_steps"] = blackout_steps;
        break;
    case Kind::gauss_noise:
        j["noise_variance"] = noise_variance;
        break;
    }
    return j.dump();
}

CorruptionSpec CorruptionSpec::from_json(const std::string& text)
{
    CorruptionSpec s;
    try {
        const json j = json::parse(text);
        s.modality = model::parse_modality(j.at("modality").get<std::string>());
        s.kind = parse_kind(j.at("kind").get<std::string>());
        s.seed = j.value("seed", std::uint64_t{0});
        s.box_side = j.value("box_side", 0);
        s.box_dx = j.value("box_dx", 0);
        s.box_dy = j.value("box_dy", 0);
        s.brightness = j.value("brightness", 1.0);
        s.angle_deg = j.value("angle_deg", 0.0);
        s.blackout_steps = j.value("blackout_steps", 0);
        s.noise_variance = j.value("noise_variance", 0.0);
    } catch (const json::exception& e) {
        throw ContractError(std::string("bad corruption spec: ") + e.what());
    }
    if (!legal(s.modality, s.kind)) {
        throw ContractError(spec_error(s.modality, s.kind));
    }
    return s;
}

CorruptionSpec sample_spec(Modality m, Rng& rng, const CorruptionConfig& cfg)
{
    const auto kinds = legal_kinds(m);
    std::uniform_int_distribution<std::size_t> pick(0, kinds.size() - 1);
    return sample_spec(m, kinds[pick(rng)], rng, cfg);
}

CorruptionSpec sample_spec(Modality m, Kind kind, Rng& rng, const CorruptionConfig& cfg)
{
    if (!legal(m, kind)) {
        throw ContractError(spec_error(m, kind));
    }
    CorruptionSpec s;
    s.modality = m;
    s.kind = kind;
    s.seed = rng();
    switch (s.kind) {
    case Kind::box_occlusion: {
        std::uniform_int_distribution<int> side(cfg.box_min, cfg.box_max);
        std::uniform_int_distribution<int> jitter(-cfg.box_jitter, cfg.box_jitter);
        s.box_side = side(rng);
        s.box_dx = jitter(rng);
        s.box_dy = jitter(rng);
        break;
    }
    case Kind::brightness:
        s.brightness = std::uniform_real_distribution<double>(cfg.brightness_min, cfg.brightness_max)(rng);
        break;
    case Kind::rotation: {
        const double magnitude = std::uniform_real_distribution<double>(cfg.rotation_min_deg, cfg.rotation_max_deg)(rng);
        s.angle_deg = std::bernoulli_distribution(0.5)(rng) ? magnitude : -magnitude;
        break;
    }
    case Kind::blackout_force:
        s.blackout_steps = cfg.blackout_steps;
        break;
    case Kind::gauss_noise: {
        std::uniform_int_distribution<std::size_t> var(0, cfg.noise_vars.size() - 1);
        s.noise_variance = cfg.noise_vars[var(rng)];
        break;
    }
    }
    return s;
}

ApplyContext make_context(const sim::NormStats& stats) { return ApplyContext{stats.zero_wrench_encoding()}; }

std::array<double, 2> peg_pixel_center(const std::vector<double>& rgb)
{
    double sx = 0.0;
    double sy = 0.0;
    double n = 0.0;
    for (std::size_t px = 0; px < sim::kPixels; ++px) {
        const double r = rgb[px];
        const double g = rgb[sim::kPixels + px];
        if (r > 0.9 && g < 0.2) {
            sx += static_cast<double>(px % sim::kImageSize);
            sy += static_cast<double>(px / sim::kImageSize);
            n += 1.0;
        }
    }
    if (n == 0.0) {
        return {(kSize - 1) / 2.0, (kSize - 1) / 2.0};
    }
    return {sx / n, sy / n};
}

sim::Observation apply(const CorruptionSpec& spec, const sim::Observation& obs, const ApplyContext& ctx)
{
    if (!legal(spec.modality, spec.kind)) {
        throw ContractError(spec_error(spec.modality, spec.kind));
    }
    sim::Observation out = obs;
    switch (spec.kind) {
    case Kind::box_occlusion: {
        if (spec.box_side <= 0) {
            throw ContractError("box_occlusion needs a positive box side");
        }
        const auto centre = peg_pixel_center(obs.rgb);
        const auto x0 = static_cast<int>(std::lround(centre[0] + spec.box_dx - spec.box_side / 2.0));
        const auto y0 = static_cast<int>(std::lround(centre[1] + spec.box_dy - spec.box_side / 2.0));
        if (spec.modality == Modality::rgb) {
            fill_box(out.rgb, 3, x0, y0, spec.box_side);
        } else {
            fill_box(out.depth, 1, x0, y0, spec.box_side);
        }
        break;
    }
    case Kind::brightness:
        for (auto& v : out.rgb) {
            v = std::clamp(v * spec.brightness, 0.0, 1.0);
        }
        break;
    case Kind::rotation:
        if (spec.modality == Modality::rgb) {
            out.rgb = rotate(obs.rgb, 3, spec.angle_deg);
        } else {
            out.depth = rotate(obs.depth, 1, spec.angle_deg);
        }
        break;
    case Kind::blackout_force:
        for (std::size_t t = 0; t < sim::kForceSteps; ++t) {
            for (std::size_t k = 0; k < sim::kWrenchDims; ++k) {
                out.force[t * sim::kWrenchDims + k] = ctx.zero_wrench[k];
            }
        }
        break;
    case Kind::gauss_noise: {
        Rng rng(spec.seed);
        std::normal_distribution<double> noise(0.0, std::sqrt(spec.noise_variance));
        for (auto& v : out.force) {
            v = std::clamp(v + noise(rng), -1.0, 1.0);
        }
        break;
    }
    }
    return out;
}

} // namespace ccm::corruption
