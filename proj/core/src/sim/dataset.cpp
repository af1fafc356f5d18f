#include "ccm/sim/dataset.hpp"

#include "ccm/error.hpp"
#include "ccm/io/binary.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace ccm::sim {

using nlohmann::json;

namespace {

constexpr double kDegenerateRange = 1e-12;

void fill_raw_observation(Observation& obs, const EnvState& state, const SimConfig& cfg)
{
    auto raster = render(state, cfg);
    obs.rgb = std::move(raster.rgb);
    obs.depth = std::move(raster.depth);
    obs.force = sensor_window(state, cfg);
    obs.proprio = {state.peg_pos[0], state.peg_pos[1], state.peg_pos[2],
                   state.peg_vel[0], state.peg_vel[1], state.peg_vel[2]};
}

double encode_range(double raw, double lo, double hi, bool degenerate)
{
    if (degenerate) {
        return std::clamp(raw, -1.0, 1.0);
    }
    const double c = std::clamp(raw, lo, hi);
    return 2.0 * (c - lo) / (hi - lo) - 1.0;
}

} // namespace

void Split::append(EpisodeRecord episode)
{
    EpisodeInfo info{frames.size(), episode.frames.size(), episode.success, episode.seed};
    for (auto& f : episode.frames) {
        frames.push_back(std::move(f));
    }
    episodes.push_back(info);
}

double NormStats::encode_force(std::size_t dim, double raw) const
{
    return encode_range(raw, force_lo[dim], force_hi[dim], force_degenerate[dim]);
}

double NormStats::encode_proprio(std::size_t dim, double raw) const
{
    return encode_range(raw, proprio_lo[dim], proprio_hi[dim], proprio_degenerate[dim]);
}

std::array<double, kWrenchDims> NormStats::zero_wrench_encoding() const
{
    std::array<double, kWrenchDims> z{};
    for (std::size_t k = 0; k < kWrenchDims; ++k) {
        z[k] = encode_force(k, 0.0);
    }
    return z;
}

const Split& Dataset::split(const std::string& name) const
{
    if (name == "train") {
        return train;
    }
    if (name == "val") {
        return val;
    }
    if (name == "test") {
        return test;
    }
    throw ContractError("unknown split '" + name + "'");
}

Observation make_observation(const EnvState& state, const SimConfig& cfg, const NormStats& stats,
                             const Vec3& action)
{
    Observation obs;
    fill_raw_observation(obs, state, cfg);
    for (std::size_t i = 0; i < obs.force.size(); ++i) {
        obs.force[i] = stats.encode_force(i % kWrenchDims, obs.force[i]);
    }
    for (std::size_t i = 0; i < kProprioSize; ++i) {
        obs.proprio[i] = stats.encode_proprio(i, obs.proprio[i]);
    }
    obs.action.assign(action.begin(), action.end());
    return obs;
}

EpisodeRecord rollout_expert_episode(std::uint64_t seed, const Config& cfg)
{
    EpisodeRecord ep;
    ep.seed = seed;
    EnvState state = reset(seed);
    Rng explore(derive_seed(seed, {2}));
    std::normal_distribution<double> noise(0.0, cfg.data.expert_noise);
    for (int t = 0; t < cfg.sim.horizon && !state.success; ++t) {
        const Vec3 clean = expert_action(state, cfg.sim);
        Vec3 noisy = clean;
        if (cfg.data.expert_noise > 0.0) {
            for (auto& v : noisy) {
                v += noise(explore);
            }
        }
        const Vec3 applied = clip_action(noisy, cfg.sim);

        Frame f;
        fill_raw_observation(f.obs, state, cfg.sim);
        f.obs.action.assign(applied.begin(), applied.end());
        f.meta.ee_pos = state.peg_pos;
        f.meta.in_contact = state.in_contact;
        f.labels.flow_mask = peg_occupancy(state.peg_pos, cfg.sim);
        f.labels.expert_action = clean;

        const StepResult next = step(state, applied, cfg.sim);
        const double du = (next.state.peg_pos[0] - state.peg_pos[0]) * static_cast<double>(kImageSize);
        const double dv = (next.state.peg_pos[1] - state.peg_pos[1]) * static_cast<double>(kImageSize);
        f.labels.flow.assign(2 * kPixels, 0.0);
        for (std::size_t px = 0; px < kPixels; ++px) {
            if (f.labels.flow_mask[px] > 0.5) {
                f.labels.flow[px] = du;
                f.labels.flow[kPixels + px] = dv;
            }
        }
        f.labels.next_ee_pos = next.state.peg_pos;
        f.labels.next_contact = next.contact;
        f.labels.paired = true;
        ep.frames.push_back(std::move(f));
        state = next.state;
    }
    ep.success = state.success;
    ep.horizon = static_cast<int>(ep.frames.size());
    return ep;
}

Split generate_raw_split(const Config& cfg, SplitId which)
{
    const int count = which == SplitId::train ? cfg.data.n_train
                      : which == SplitId::val ? cfg.data.n_val
                                              : cfg.data.n_test;
    Split split;
    for (int e = 0; e < count; ++e) {
        const auto seed = derive_seed(cfg.data.seed, {static_cast<std::uint64_t>(which), static_cast<std::uint64_t>(e)});
        split.append(rollout_expert_episode(seed, cfg));
    }
    return split;
}

double percentile(std::vector<double> values, double q)
{
    if (values.empty()) {
        throw ContractError("percentile of an empty sample");
    }
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

NormStats compute_stats(const Split& raw_train)
{
    if (raw_train.empty()) {
        throw ContractError("cannot compute normalization statistics on an empty train split");
    }
    NormStats s;
    // Each frame's newest window row is that step's reading; rows further back
    // repeat earlier frames or are padding.
    for (std::size_t k = 0; k < kWrenchDims; ++k) {
        std::vector<double> readings;
        readings.reserve(raw_train.size());
        for (const auto& f : raw_train.frames) {
            readings.push_back(f.obs.force[(kForceSteps - 1) * kWrenchDims + k]);
        }
        s.force_lo[k] = percentile(readings, 3.0);
        s.force_hi[k] = percentile(std::move(readings), 97.0);
        s.force_degenerate[k] = s.force_hi[k] - s.force_lo[k] < kDegenerateRange;
        if (s.force_degenerate[k]) {
            std::cerr << "warning: force dimension " << k
                      << " has a degenerate 3rd/97th percentile range; passing through clipped to [-1,1]\n";
        }
    }
    for (std::size_t k = 0; k < kProprioSize; ++k) {
        double lo = raw_train.frames.front().obs.proprio[k];
        double hi = lo;
        for (const auto& f : raw_train.frames) {
            lo = std::min(lo, f.obs.proprio[k]);
            hi = std::max(hi, f.obs.proprio[k]);
        }
        s.proprio_lo[k] = lo;
        s.proprio_hi[k] = hi;
        s.proprio_degenerate[k] = hi - lo < kDegenerateRange;
        if (s.proprio_degenerate[k]) {
            std::cerr << "warning: proprio dimension " << k << " is constant on the train split\n";
        }
    }
    s.robot_mask.assign(kPixels, 0.0);
    for (const auto& f : raw_train.frames) {
        for (std::size_t px = 0; px < kPixels; ++px) {
            if (f.labels.flow_mask[px] > 0.5) {
                s.robot_mask[px] = 1.0;
            }
        }
    }
    return s;
}

void normalize_split(Split& split, const NormStats& stats)
{
    for (auto& f : split.frames) {
        for (std::size_t i = 0; i < f.obs.force.size(); ++i) {
            f.obs.force[i] = stats.encode_force(i % kWrenchDims, f.obs.force[i]);
        }
        for (std::size_t i = 0; i < kProprioSize; ++i) {
            f.obs.proprio[i] = stats.encode_proprio(i, f.obs.proprio[i]);
        }
    }
}

Dataset generate_dataset(const Config& cfg)
{
    cfg.validate();
    Dataset d;
    d.train = generate_raw_split(cfg, SplitId::train);
    d.val = generate_raw_split(cfg, SplitId::val);
    d.test = generate_raw_split(cfg, SplitId::test);
    d.stats = compute_stats(d.train);
    normalize_split(d.train, d.stats);
    normalize_split(d.val, d.stats);
    normalize_split(d.test, d.stats);
    d.config_text = cfg.dump();
    d.config_hash = cfg.hash();
    d.seed = cfg.data.seed;
    return d;
}

Frame make_unpaired(const Frame& sample, const Split& pool, std::uint64_t seed, double min_distance,
                    int max_draws)
{
    if (pool.empty()) {
        throw ContractError("make_unpaired: empty pool");
    }
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int draw = 0; draw < max_draws; ++draw) {
        const Frame& other = pool.frames[pick(rng)];
        double d2 = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            const double diff = other.meta.ee_pos[i] - sample.meta.ee_pos[i];
            d2 += diff * diff;
        }
        if (std::sqrt(d2) >= min_distance) {
            Frame out = sample;
            out.obs.rgb = other.obs.rgb;
            out.labels.paired = false;
            return out;
        }
    }
    throw ContractError("make_unpaired: no frame at least " + std::to_string(min_distance) + " away after " +
                        std::to_string(max_draws) + " draws");
}

// --- persistence ----------------------------------------------------------

namespace {

const std::vector<std::pair<std::string, std::size_t>>& frame_layout()
{
    static const std::vector<std::pair<std::string, std::size_t>> layout{
        {"rgb", kRgbSize},       {"depth", kPixels},      {"force", kForceSize},
        {"proprio", kProprioSize}, {"action", kActionSize}, {"flow", 2 * kPixels},
        {"flow_mask", kPixels},  {"next_ee_pos", 3},      {"next_contact", 1},
        {"paired", 1},           {"expert_action", 3},    {"ee_pos", 3},
        {"in_contact", 1}};
    return layout;
}

void append_frame(std::vector<double>& out, const Frame& f)
{
    auto put = [&out](const auto& v) { out.insert(out.end(), v.begin(), v.end()); };
    put(f.obs.rgb);
    put(f.obs.depth);
    put(f.obs.force);
    put(f.obs.proprio);
    put(f.obs.action);
    put(f.labels.flow);
    put(f.labels.flow_mask);
    put(f.labels.next_ee_pos);
    out.push_back(f.labels.next_contact ? 1.0 : 0.0);
    out.push_back(f.labels.paired ? 1.0 : 0.0);
    put(f.labels.expert_action);
    put(f.meta.ee_pos);
    out.push_back(f.meta.in_contact ? 1.0 : 0.0);
}

Frame read_frame(const double* p)
{
    Frame f;
    auto take = [&p](std::size_t n) {
        std::vector<double> v(p, p + n);
        p += n;
        return v;
    };
    auto take3 = [&p]() {
        Vec3 v{p[0], p[1], p[2]};
        p += 3;
        return v;
    };
    f.obs.rgb = take(kRgbSize);
    f.obs.depth = take(kPixels);
    f.obs.force = take(kForceSize);
    f.obs.proprio = take(kProprioSize);
    f.obs.action = take(kActionSize);
    f.labels.flow = take(2 * kPixels);
    f.labels.flow_mask = take(kPixels);
    f.labels.next_ee_pos = take3();
    f.labels.next_contact = *p++ > 0.5;
    f.labels.paired = *p++ > 0.5;
    f.labels.expert_action = take3();
    f.meta.ee_pos = take3();
    f.meta.in_contact = *p++ > 0.5;
    return f;
}

json stats_to_json(const NormStats& s)
{
    return json{{"force_lo", s.force_lo},
                {"force_hi", s.force_hi},
                {"force_degenerate", s.force_degenerate},
                {"proprio_lo", s.proprio_lo},
                {"proprio_hi", s.proprio_hi},
                {"proprio_degenerate", s.proprio_degenerate},
                {"robot_mask", s.robot_mask}};
}

NormStats stats_from_json(const json& j)
{
    NormStats s;
    s.force_lo = j.at("force_lo").get<std::array<double, kWrenchDims>>();
    s.force_hi = j.at("force_hi").get<std::array<double, kWrenchDims>>();
    s.force_degenerate = j.at("force_degenerate").get<std::array<bool, kWrenchDims>>();
    s.proprio_lo = j.at("proprio_lo").get<std::array<double, kProprioSize>>();
    s.proprio_hi = j.at("proprio_hi").get<std::array<double, kProprioSize>>();
    s.proprio_degenerate = j.at("proprio_degenerate").get<std::array<bool, kProprioSize>>();
    s.robot_mask = j.at("robot_mask").get<std::vector<double>>();
    if (s.robot_mask.size() != kPixels) {
        throw ContractError("robot mask has wrong size");
    }
    return s;
}

} // namespace

std::string stats_json_text(const NormStats& s) { return stats_to_json(s).dump(); }
NormStats stats_from_json_text(const std::string& text) { return stats_from_json(json::parse(text)); }

void save_dataset(const Dataset& data, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = "ccm-dataset/1";
    manifest["byte_order"] = "little-endian float64";
    json layout = json::array();
    for (const auto& [name, count] : frame_layout()) {
        layout.push_back({{"field", name}, {"count", count}});
    }
    manifest["frame_layout"] = layout;
    manifest["frame_record_size"] = kFrameRecordSize;
    manifest["shapes"] = {{"rgb", {3, kImageSize, kImageSize}},
                          {"depth", {1, kImageSize, kImageSize}},
                          {"force", {1, kForceSteps, kWrenchDims}},
                          {"proprio", {kProprioSize}},
                          {"action", {kActionSize}},
                          {"flow", {2, kImageSize, kImageSize}},
                          {"flow_mask", {1, kImageSize, kImageSize}}};
    manifest["seed"] = data.seed;
    manifest["config_hash"] = data.config_hash;
    manifest["config"] = data.config_text;
    manifest["normalization"] = stats_to_json(data.stats);
    for (const char* name : {"train", "val", "test"}) {
        const Split& s = data.split(name);
        json episodes = json::array();
        for (const auto& e : s.episodes) {
            episodes.push_back({{"start", e.start}, {"length", e.length}, {"success", e.success}, {"seed", e.seed}});
        }
        manifest["splits"][name] = {{"episodes", episodes},
                                    {"n_episodes", s.episodes.size()},
                                    {"n_frames", s.size()},
                                    {"file", std::string(name) + ".bin"}};
        std::vector<double> flat;
        flat.reserve(s.size() * kFrameRecordSize);
        for (const auto& f : s.frames) {
            append_frame(flat, f);
        }
        io::write_f64(dir / (std::string(name) + ".bin"), flat);
    }
    io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir)
{
    json manifest;
    try {
        manifest = json::parse(io::read_text(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw ContractError("bad dataset manifest in '" + dir.string() + "': " + e.what());
    }
    if (manifest.value("format", "") != "ccm-dataset/1") {
        throw ContractError("'" + dir.string() + "' is not a ccm dataset");
    }
    if (manifest.at("frame_record_size").get<std::size_t>() != kFrameRecordSize) {
        throw ContractError("dataset frame layout does not match this build");
    }
    Dataset d;
    d.seed = manifest.at("seed").get<std::uint64_t>();
    d.config_hash = manifest.at("config_hash").get<std::string>();
    d.config_text = manifest.at("config").get<std::string>();
    d.stats = stats_from_json(manifest.at("normalization"));
    for (const char* name : {"train", "val", "test"}) {
        Split& s = name == std::string("train") ? d.train : (name == std::string("val") ? d.val : d.test);
        const auto& js = manifest.at("splits").at(name);
        const auto flat = io::read_f64(dir / js.at("file").get<std::string>());
        const auto n = js.at("n_frames").get<std::size_t>();
        if (flat.size() != n * kFrameRecordSize) {
            throw ContractError("split '" + std::string(name) + "' has " + std::to_string(flat.size()) +
                                " values, expected " + std::to_string(n * kFrameRecordSize));
        }
        s.frames.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            s.frames.push_back(read_frame(flat.data() + i * kFrameRecordSize));
        }
        for (const auto& e : js.at("episodes")) {
            s.episodes.push_back({e.at("start").get<std::size_t>(), e.at("length").get<std::size_t>(),
                                  e.at("success").get<bool>(), e.at("seed").get<std::uint64_t>()});
        }
    }
    return d;
}

} // namespace ccm::sim
