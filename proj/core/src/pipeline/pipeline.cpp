#include "ccm/pipeline/pipeline.hpp"

#include "ccm/error.hpp"
#include "ccm/numerics/tensor.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace ccm::pipeline {

using model::Modality;
using model::ModalitySet;

namespace {

ModalitySet subset_without(std::optional<Modality> drop)
{
    if (!drop) {
        return ModalitySet::all();
    }
    if (*drop == Modality::proprio) {
        throw ContractError("proprio cannot be dropped: it is assumed always present");
    }
    return ModalitySet::all_but(*drop);
}

model::LatentCode row_code(const model::FusedBatch& fused, std::size_t row)
{
    const std::size_t d = fused.mean.dim(1);
    const auto mean = fused.mean.data().subspan(row * d, d);
    const auto var = fused.variance.data().subspan(row * d, d);
    model::LatentCode code;
    code.mean.assign(mean.begin(), mean.end());
    code.variance.assign(var.begin(), var.end());
    code.fused_modalities = fused.modalities;
    return code;
}

void check_mode(const detector::ThresholdTable& table, Mode mode)
{
    if (mode == Mode::detect_correct && !table.calibrated) {
        throw ContractError("detect_correct needs a calibrated threshold table");
    }
}

} // namespace

std::string_view mode_name(Mode m)
{
    switch (m) {
    case Mode::full:
        return "full";
    case Mode::detect_correct:
        return "detect_correct";
    case Mode::no_correct:
        return "no_correct";
    }
    return "?";
}

model::LatentCode encode_with_missing(const sim::Observation& obs, const model::FusionModel& model,
                                      std::optional<Modality> drop)
{
    const ModalitySet subset = subset_without(drop);
    nx::NoGradGuard guard;
    const sim::Observation* one[] = {&obs};
    return row_code(model.encode_fuse(model::stack_inputs(one), subset), 0);
}

Compensated compensate(const sim::Observation& obs, const model::FusionModel& model,
                       const detector::ThresholdTable& table, Mode mode)
{
    check_mode(table, mode);
    Compensated out;
    if (table.calibrated) {
        out.detection = detector::detect(obs, model, table);
    } else {
        out.detection.scores = detector::recon_error(obs, model);
    }
    const bool act = mode == Mode::detect_correct;
    out.code = encode_with_missing(obs, model, act ? out.detection.rejected : std::nullopt);
    return out;
}

std::vector<Compensated> compensate_batch(std::span<const sim::Observation* const> observations,
                                          const model::FusionModel& model, const detector::ThresholdTable& table,
                                          Mode mode)
{
    check_mode(table, mode);
    std::vector<Compensated> out(observations.size());
    if (observations.empty()) {
        return out;
    }
    nx::NoGradGuard guard;
    const model::ExpertSet experts = model.encode_all(model::stack_inputs(observations));
    const model::FusedBatch full = model::fuse(experts, ModalitySet::all());
    const auto scores = detector::recon_errors(observations, model);

    std::array<std::optional<model::FusedBatch>, model::kModalities.size()> dropped;
    for (std::size_t r = 0; r < observations.size(); ++r) {
        auto& o = out[r];
        if (table.calibrated) {
            o.detection = detector::detect(scores[r], table);
        } else {
            o.detection.scores = scores[r];
        }
        const auto reject = mode == Mode::detect_correct ? o.detection.rejected : std::nullopt;
        if (!reject) {
            o.code = row_code(full, r);
            continue;
        }
        auto& fused = dropped[static_cast<std::size_t>(*reject)];
        if (!fused) {
            fused = model::fuse(experts, subset_without(reject));
        }
        o.code = row_code(*fused, r);
    }
    return out;
}

std::vector<LatentShift> latent_shift(const sim::Split& split, const model::FusionModel& model)
{
    if (split.empty()) {
        throw ContractError("latent shift needs a nonempty split");
    }
    nx::NoGradGuard guard;
    const std::size_t d = model.latent_dim();
    std::array<std::vector<double>, model::kDroppable.size()> dist;
    constexpr std::size_t chunk = 256;
    for (std::size_t start = 0; start < split.size(); start += chunk) {
        std::vector<const sim::Observation*> obs;
        for (std::size_t i = start; i < std::min(split.size(), start + chunk); ++i) {
            obs.push_back(&split.frames[i].obs);
        }
        const auto experts = model.encode_all(model::stack_inputs(obs));
        const nx::Tensor full_mean = model::fuse(experts, ModalitySet::all()).mean;
        const auto full = full_mean.data();
        for (std::size_t k = 0; k < model::kDroppable.size(); ++k) {
            const nx::Tensor dropped = model::fuse(experts, ModalitySet::all_but(model::kDroppable[k])).mean;
            const auto part = dropped.data();
            for (std::size_t r = 0; r < obs.size(); ++r) {
                double s = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double diff = full[r * d + j] - part[r * d + j];
                    s += diff * diff;
                }
                dist[k].push_back(std::sqrt(s));
            }
        }
    }
    std::vector<LatentShift> out;
    for (std::size_t k = 0; k < model::kDroppable.size(); ++k) {
        const auto stats = detector::mean_std(dist[k]);
        out.push_back({model::kDroppable[k], stats.mean, stats.std, dist[k].size()});
    }
    return out;
}

std::string latent_shift_csv(const std::vector<LatentShift>& rows, const std::string& config_hash,
                             std::uint64_t seed)
{
    std::ostringstream os;
    os << "# config_hash=" << config_hash << " seed=" << seed << "\n";
    os << "dropped_modality,mean_l2,std_l2,frames\n" << std::setprecision(17);
    for (const auto& r : rows) {
        os << model::name(r.dropped) << ',' << r.mean_l2 << ',' << r.std_l2 << ',' << r.frames << "\n";
    }
    return os.str();
}

} // namespace ccm::pipeline
