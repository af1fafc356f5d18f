#include "ccm/detector/suite.hpp"

#include "ccm/error.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace ccm::detector {

using corruption::Kind;
using model::Modality;

namespace {

std::vector<const sim::Observation*> pointers(const std::vector<sim::Observation>& obs)
{
    std::vector<const sim::Observation*> out;
    out.reserve(obs.size());
    for (const auto& o : obs) {
        out.push_back(&o);
    }
    return out;
}

std::vector<double> modality_scores(const std::vector<Scores>& scores, Modality m, const ThresholdTable& table)
{
    if (m == Modality::force) {
        std::vector<double> out;
        for (const auto& s : scores) {
            out.push_back(force_modality_score(s, table));
        }
        return out;
    }
    return channel(scores, m == Modality::rgb ? "rgb" : "depth");
}

std::string format_param(double v)
{
    std::ostringstream os;
    os << "var=" << v;
    return os.str();
}

} // namespace

std::vector<sim::Observation> corrupt_split(const sim::Split& split, Modality m, std::optional<Kind> kind,
                                            std::optional<double> noise_variance, const Config& cfg,
                                            const sim::NormStats& stats, std::uint64_t seed)
{
    Rng rng(seed);
    const auto ctx = corruption::make_context(stats);
    std::vector<sim::Observation> out;
    out.reserve(split.size());
    for (const auto& f : split.frames) {
        auto spec = kind ? corruption::sample_spec(m, *kind, rng, cfg.corruption)
                         : corruption::sample_spec(m, rng, cfg.corruption);
        if (noise_variance && spec.kind == Kind::gauss_noise) {
            spec.noise_variance = *noise_variance;
        }
        out.push_back(corruption::apply(spec, f.obs, ctx));
    }
    return out;
}

std::vector<Scores> score_split(const sim::Split& split, const model::FusionModel& model)
{
    std::vector<const sim::Observation*> obs;
    obs.reserve(split.size());
    for (const auto& f : split.frames) {
        obs.push_back(&f.obs);
    }
    return recon_errors(obs, model);
}

std::vector<Scores> score_observations(const std::vector<sim::Observation>& obs, const model::FusionModel& model)
{
    return recon_errors(pointers(obs), model);
}

ThresholdTable calibrate_on(const sim::Dataset& data, const model::FusionModel& model, const Config& cfg,
                            std::uint64_t seed)
{
    if (data.val.empty() || data.train.empty()) {
        throw ContractError("calibration needs nonempty train and validation splits");
    }
    CalibrationInput in;
    in.clean = score_split(data.val, model);
    auto suite = [&](Modality m) {
        const auto obs = corrupt_split(data.val, m, std::nullopt, std::nullopt, cfg, data.stats,
                                       derive_seed(seed, {static_cast<std::uint64_t>(m)}));
        return score_observations(obs, model);
    };
    in.rgb_corrupt = suite(Modality::rgb);
    in.depth_corrupt = suite(Modality::depth);
    in.force_corrupt = suite(Modality::force);
    in.train = score_split(data.train, model);
    ThresholdTable t = calibrate(in);
    t.seed = seed;
    return t;
}

std::vector<SuiteRow> evaluate_suite(const sim::Split& split, const model::FusionModel& model,
                                     const ThresholdTable& table, const Config& cfg, const sim::NormStats& stats,
                                     std::uint64_t seed)
{
    if (split.empty()) {
        throw ContractError("corruption suite needs a nonempty split");
    }
    const auto clean = score_split(split, model);
    std::vector<SuiteRow> rows;
    {
        SuiteRow r{"none", "clean", "", 0.0, 0.0, clean.size()};
        std::size_t untouched = 0;
        for (const auto& s : clean) {
            untouched += detect(s, table).rejected ? 0 : 1;
        }
        r.auroc = std::numeric_limits<double>::quiet_NaN();
        r.replace_key_accuracy = static_cast<double>(untouched) / static_cast<double>(clean.size());
        rows.push_back(r);
    }
    std::uint64_t tag = 0;
    for (auto m : model::kDroppable) {
        for (auto kind : corruption::legal_kinds(m)) {
            std::vector<std::optional<double>> variants{std::nullopt};
            if (kind == Kind::gauss_noise) {
                variants.assign(cfg.corruption.noise_vars.begin(), cfg.corruption.noise_vars.end());
            }
            for (const auto& var : variants) {
                const auto obs = corrupt_split(split, m, kind, var, cfg, stats, derive_seed(seed, {++tag}));
                const auto scores = score_observations(obs, model);
                SuiteRow r{std::string(model::name(m)), std::string(corruption::kind_name(kind)),
                           var ? format_param(*var) : "", 0.0, 0.0, scores.size()};
                r.auroc = auroc(modality_scores(clean, m, table), modality_scores(scores, m, table));
                std::size_t hits = 0;
                for (const auto& s : scores) {
                    hits += detect(s, table).rejected == m ? 1 : 0;
                }
                r.replace_key_accuracy = static_cast<double>(hits) / static_cast<double>(scores.size());
                rows.push_back(r);
            }
        }
    }
    return rows;
}

std::string suite_csv(const std::vector<SuiteRow>& rows, const std::string& config_hash, std::uint64_t seed)
{
    std::ostringstream os;
    os << "# config_hash=" << config_hash << " seed=" << seed << "\n";
    os << "modality,kind,param,auroc,replace_key_accuracy,frames\n" << std::setprecision(17);
    for (const auto& r : rows) {
        os << r.modality << ',' << r.kind << ',' << r.param << ',';
        if (std::isnan(r.auroc)) {
            os << "";
        } else {
            os << r.auroc;
        }
        os << ',' << r.replace_key_accuracy << ',' << r.frames << "\n";
    }
    return os.str();
}

} // namespace ccm::detector
