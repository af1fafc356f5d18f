#include "ccm/detector/detector.hpp"

#include "ccm/error.hpp"
#include "ccm/numerics/tensor.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ccm::detector {

using model::Modality;
using nlohmann::json;

namespace {

double l2(const double* a, const double* b, std::size_t n, std::size_t stride_a = 1, std::size_t stride_b = 1)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i * stride_a] - b[i * stride_b];
        s += d * d;
    }
    return std::sqrt(s);
}

void require_finite(double v, const char* what)
{
    if (!std::isfinite(v)) {
        throw ContractError(std::string("threshold table: ") + what + " is not finite");
    }
}

json stats_json(const ChannelStats& s) { return json{{"mean", s.mean}, {"std", s.std}}; }

ChannelStats stats_from(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

void check_table(const ThresholdTable& t)
{
    require_finite(t.rgb, "rgb threshold");
    require_finite(t.depth, "depth threshold");
    for (double v : t.force) {
        require_finite(v, "force threshold");
    }
    auto positive = [](const ChannelStats& s) {
        if (!(s.std > 0.0) || !std::isfinite(s.mean)) {
            throw ContractError("threshold table: channel statistics need a finite mean and std > 0");
        }
    };
    positive(t.rgb_stats);
    positive(t.depth_stats);
    for (const auto& s : t.force_stats) {
        positive(s);
    }
}

} // namespace

std::vector<Scores> recon_errors(std::span<const sim::Observation* const> observations,
                                 const model::FusionModel& model, std::size_t chunk)
{
    nx::NoGradGuard guard;
    std::vector<Scores> out;
    out.reserve(observations.size());
    chunk = std::max<std::size_t>(chunk, 1);
    for (std::size_t start = 0; start < observations.size(); start += chunk) {
        const auto part = observations.subspan(start, std::min(chunk, observations.size() - start));
        const model::InputBatch in = model::stack_inputs(part);
        const nx::Tensor z = model.encode_fuse(in).mean;
        const nx::Tensor rgb = model.decode(Modality::rgb, z);
        const nx::Tensor depth = model.decode(Modality::depth, z);
        const nx::Tensor force = model.decode(Modality::force, z);
        const std::size_t force_out = model::FusionModel::output_size(Modality::force);
        for (std::size_t r = 0; r < part.size(); ++r) {
            const sim::Observation& obs = *part[r];
            Scores s;
            s.rgb = l2(obs.rgb.data(), rgb.data().data() + r * sim::kRgbSize, sim::kRgbSize);
            s.depth = l2(obs.depth.data(), depth.data().data() + r * sim::kPixels, sim::kPixels);
            const double* f = force.data().data() + r * force_out;
            for (std::size_t k = 0; k < kForceDims; ++k) {
                s.force[k] = l2(obs.force.data() + k, f + k, sim::kForceSteps, sim::kWrenchDims, kForceDims);
            }
            out.push_back(s);
        }
    }
    return out;
}

Scores recon_error(const sim::Observation& obs, const model::FusionModel& model)
{
    const sim::Observation* one[] = {&obs};
    return recon_errors(one, model).front();
}

double auroc(std::span<const double> clean, std::span<const double> corrupt)
{
    if (clean.empty() || corrupt.empty()) {
        throw ContractError("auroc needs nonempty clean and corrupt score lists");
    }
    struct Item {
        double score;
        bool corrupt;
    };
    std::vector<Item> items;
    items.reserve(clean.size() + corrupt.size());
    for (double v : clean) {
        items.push_back({v, false});
    }
    for (double v : corrupt) {
        items.push_back({v, true});
    }
    for (const auto& it : items) {
        if (std::isnan(it.score)) {
            throw ContractError("auroc: NaN score");
        }
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score > b.score; });

    // Walk the ROC from the highest threshold down. With FP/TP counts as
    // integers, twice the trapezoid area is an exact integer sum.
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t twice_area = 0;
    for (std::size_t i = 0; i < items.size();) {
        std::uint64_t dtp = 0;
        std::uint64_t dfp = 0;
        std::size_t j = i;
        for (; j < items.size() && items[j].score == items[i].score; ++j) {
            (items[j].corrupt ? dtp : dfp) += 1;
        }
        twice_area += dfp * (2 * tp + dtp);
        tp += dtp;
        fp += dfp;
        i = j;
    }
    return static_cast<double>(twice_area) / (2.0 * static_cast<double>(fp) * static_cast<double>(tp));
}

Cut youden_threshold(std::span<const double> clean, std::span<const double> corrupt)
{
    if (clean.empty() || corrupt.empty()) {
        throw ContractError("calibration needs both clean and corrupted scores (got a single class)");
    }
    std::vector<double> values(clean.begin(), clean.end());
    values.insert(values.end(), corrupt.begin(), corrupt.end());
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    std::vector<double> c(clean.begin(), clean.end());
    std::vector<double> k(corrupt.begin(), corrupt.end());
    std::sort(c.begin(), c.end());
    std::sort(k.begin(), k.end());
    const auto nc = static_cast<double>(c.size());
    const auto nk = static_cast<double>(k.size());

    // Candidate cuts: midpoints between consecutive distinct values, plus one
    // cut below all and one above all scores.
    auto j_at = [&](double t) {
        const auto above_k = static_cast<double>(k.end() - std::upper_bound(k.begin(), k.end(), t));
        const auto above_c = static_cast<double>(c.end() - std::upper_bound(c.begin(), c.end(), t));
        return above_k / nk - above_c / nc;
    };
    Cut best{values.front() - 1.0, j_at(values.front() - 1.0)};
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        const double t = 0.5 * (values[i] + values[i + 1]);
        const double j = j_at(t);
        if (j > best.youden_j) {
            best = {t, j};
        }
    }
    const double top = values.back() + 1.0;
    if (j_at(top) > best.youden_j) {
        best = {top, j_at(top)};
    }
    return best;
}

ChannelStats mean_std(std::span<const double> values)
{
    if (values.empty()) {
        throw ContractError("mean_std of an empty list");
    }
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mean) * (v - mean);
    }
    double std = std::sqrt(ss / n);
    if (!(std > 0.0)) {
        // Constant channel: any positive scale gives the same ordering of z.
        std = std::max(1e-12, std::abs(mean) * 1e-12);
    }
    return {mean, std};
}

std::vector<double> channel(std::span<const Scores> scores, const std::string& name)
{
    std::vector<double> out;
    out.reserve(scores.size());
    for (const auto& s : scores) {
        if (name == "rgb") {
            out.push_back(s.rgb);
        } else if (name == "depth") {
            out.push_back(s.depth);
        } else if (name.size() == 6 && name.starts_with("force") && name[5] >= '0' && name[5] <= '2') {
            out.push_back(s.force[static_cast<std::size_t>(name[5] - '0')]);
        } else {
            throw ContractError("unknown score channel '" + name + "'");
        }
    }
    return out;
}

double force_modality_score(const Scores& s, const ThresholdTable& table)
{
    std::array<double, kForceDims> ratio{};
    for (std::size_t k = 0; k < kForceDims; ++k) {
        ratio[k] = s.force[k] / table.force[k];
    }
    std::sort(ratio.begin(), ratio.end());
    return ratio[kForceDims - 2];
}

ThresholdTable calibrate(const CalibrationInput& in)
{
    ThresholdTable t;
    const auto clean_rgb = channel(in.clean, "rgb");
    const auto bad_rgb = channel(in.rgb_corrupt, "rgb");
    t.rgb = youden_threshold(clean_rgb, bad_rgb).threshold;
    t.rgb_auroc = auroc(clean_rgb, bad_rgb);

    const auto clean_depth = channel(in.clean, "depth");
    const auto bad_depth = channel(in.depth_corrupt, "depth");
    t.depth = youden_threshold(clean_depth, bad_depth).threshold;
    t.depth_auroc = auroc(clean_depth, bad_depth);

    for (std::size_t k = 0; k < kForceDims; ++k) {
        const std::string name = "force" + std::to_string(k);
        const auto clean = channel(in.clean, name);
        const auto bad = channel(in.force_corrupt, name);
        t.force[k] = youden_threshold(clean, bad).threshold;
        t.force_dim_auroc[k] = auroc(clean, bad);
    }
    std::vector<double> clean_force;
    std::vector<double> bad_force;
    for (const auto& s : in.clean) {
        clean_force.push_back(force_modality_score(s, t));
    }
    for (const auto& s : in.force_corrupt) {
        bad_force.push_back(force_modality_score(s, t));
    }
    t.force_auroc = auroc(clean_force, bad_force);

    t.rgb_stats = mean_std(channel(in.train, "rgb"));
    t.depth_stats = mean_std(channel(in.train, "depth"));
    for (std::size_t k = 0; k < kForceDims; ++k) {
        t.force_stats[k] = mean_std(channel(in.train, "force" + std::to_string(k)));
    }
    t.calibrated = true;
    check_table(t);
    return t;
}

bool DetectionResult::flagged(Modality m) const
{
    switch (m) {
    case Modality::rgb:
        return rgb_flag;
    case Modality::depth:
        return depth_flag;
    case Modality::force:
        return force_flag;
    case Modality::proprio:
        return false;
    }
    return false;
}

DetectionResult detect(const Scores& scores, const ThresholdTable& table)
{
    if (!table.calibrated) {
        throw ContractError("detection needs a calibrated threshold table");
    }
    DetectionResult r;
    r.scores = scores;
    r.rgb_flag = scores.rgb > table.rgb;
    r.depth_flag = scores.depth > table.depth;
    int force_hits = 0;
    for (std::size_t k = 0; k < kForceDims; ++k) {
        r.force_dim_flags[k] = scores.force[k] > table.force[k];
        force_hits += r.force_dim_flags[k] ? 1 : 0;
    }
    r.force_flag = force_hits >= 2;

    auto z = [](double v, const ChannelStats& s) { return (v - s.mean) / s.std; };
    if (r.rgb_flag) {
        r.rgb_z = z(scores.rgb, table.rgb_stats);
    }
    if (r.depth_flag) {
        r.depth_z = z(scores.depth, table.depth_stats);
    }
    if (r.force_flag) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < kForceDims; ++k) {
            if (r.force_dim_flags[k]) {
                best = std::max(best, z(scores.force[k], table.force_stats[k]));
            }
        }
        r.force_z = best;
    }

    // Largest z wins; canonical order breaks exact ties.
    const std::array<std::pair<Modality, std::optional<double>>, 3> candidates{
        {{Modality::rgb, r.rgb_z}, {Modality::depth, r.depth_z}, {Modality::force, r.force_z}}};
    double best_z = 0.0;
    for (const auto& [m, zm] : candidates) {
        if (zm && (!r.rejected || *zm > best_z)) {
            r.rejected = m;
            best_z = *zm;
        }
    }
    return r;
}

DetectionResult detect(const sim::Observation& obs, const model::FusionModel& model, const ThresholdTable& table)
{
    if (!table.calibrated) {
        throw ContractError("detection needs a calibrated threshold table");
    }
    return detect(recon_error(obs, model), table);
}

std::string DetectionResult::to_json() const
{
    json j;
    j["scores"] = {{"rgb", scores.rgb}, {"depth", scores.depth}, {"force", scores.force}};
    j["flags"] = {{"rgb", rgb_flag}, {"depth", depth_flag}, {"force", force_flag}, {"force_dims", force_dim_flags}};
    json zs = json::object();
    if (rgb_z) {
        zs["rgb"] = *rgb_z;
    }
    if (depth_z) {
        zs["depth"] = *depth_z;
    }
    if (force_z) {
        zs["force"] = *force_z;
    }
    j["z_scores"] = zs;
    j["rejected"] = rejected ? json(std::string(model::name(*rejected))) : json(nullptr);
    return j.dump();
}

std::string ThresholdTable::to_json() const
{
    check_table(*this);
    json j;
    j["format"] = "ccm-thresholds/1";
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["thresholds"] = {{"rgb", rgb}, {"depth", depth}, {"force", force}};
    j["train_error"] = {{"rgb", stats_json(rgb_stats)},
                        {"depth", stats_json(depth_stats)},
                        {"force", {stats_json(force_stats[0]), stats_json(force_stats[1]), stats_json(force_stats[2])}}};
    j["auroc"] = {{"rgb", rgb_auroc}, {"depth", depth_auroc}, {"force", force_auroc}, {"force_dims", force_dim_auroc}};
    return j.dump(2) + "\n";
}

ThresholdTable ThresholdTable::from_json(const std::string& text)
{
    ThresholdTable t;
    try {
        const json j = json::parse(text);
        if (j.at("format").get<std::string>() != "ccm-thresholds/1") {
            throw ContractError("not a threshold table (format " + j.at("format").dump() + ")");
        }
        t.config_hash = j.at("config_hash").get<std::string>();
        t.seed = j.at("seed").get<std::uint64_t>();
        const auto& th = j.at("thresholds");
        t.rgb = th.at("rgb").get<double>();
        t.depth = th.at("depth").get<double>();
        t.force = th.at("force").get<std::array<double, kForceDims>>();
        const auto& te = j.at("train_error");
        t.rgb_stats = stats_from(te.at("rgb"));
        t.depth_stats = stats_from(te.at("depth"));
        for (std::size_t k = 0; k < kForceDims; ++k) {
            t.force_stats[k] = stats_from(te.at("force").at(k));
        }
        const auto& a = j.at("auroc");
        t.rgb_auroc = a.at("rgb").get<double>();
        t.depth_auroc = a.at("depth").get<double>();
        t.force_auroc = a.at("force").get<double>();
        t.force_dim_auroc = a.at("force_dims").get<std::array<double, kForceDims>>();
    } catch (const json::exception& e) {
        throw ContractError(std::string("bad threshold table: ") + e.what());
    }
    check_table(t);
    t.calibrated = true;
    return t;
}

} // namespace ccm::detector
