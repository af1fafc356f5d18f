#include "ccm/model/fusion.hpp"

#include "ccm/error.hpp"
#include "ccm/io/binary.hpp"

#include "json.hpp"

#include <cmath>

namespace ccm::model {

using nx::Tensor;
using nlohmann::json;

namespace {

constexpr std::size_t kReconForceDims = 3;

std::size_t index(Modality m) { return static_cast<std::size_t>(m); }

const std::vector<double>& observation_buffer(const sim::Observation& obs, Modality m)
{
    switch (m) {
    case Modality::rgb:
        return obs.rgb;
    case Modality::depth:
        return obs.depth;
    case Modality::force:
        return obs.force;
    case Modality::proprio:
        return obs.proprio;
    }
    throw ContractError("unknown modality id");
}

std::vector<std::size_t> with_ends(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out)
{
    std::vector<std::size_t> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    if (out > 0) {
        sizes.push_back(out);
    }
    return sizes;
}

void check_latent(const LatentCode& code)
{
    if (code.mean.size() != code.variance.size()) {
        throw DimensionError("latent mean has " + std::to_string(code.mean.size()) + " dims, variance " +
                             std::to_string(code.variance.size()));
    }
}

} // namespace

LatentCode fuse_poe(const std::vector<GaussianExpert>& experts)
{
    if (experts.empty()) {
        throw ContractError("fuse_poe needs at least one expert");
    }
    const std::size_t d = experts.front().mean.size();
    LatentCode out;
    out.mean.assign(d, 0.0);
    out.variance.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double precision = 1.0; // prior expert N(0, 1)
        double weighted = 0.0;
        for (const auto& e : experts) {
            if (e.mean.size() != d || e.variance.size() != d) {
                throw DimensionError("expert dimensions disagree: expected " + std::to_string(d));
            }
            if (!(e.variance[j] > 0.0) || !std::isfinite(e.variance[j])) {
                throw ContractError("expert variance must be positive and finite");
            }
            const double t = 1.0 / e.variance[j];
            precision += t;
            weighted += e.mean[j] * t;
        }
        out.variance[j] = 1.0 / precision;
        out.mean[j] = weighted / precision;
    }
    return out;
}

LatentCode reparameterize(const LatentCode& code, std::uint64_t seed)
{
    check_latent(code);
    LatentCode out = code;
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> sample(code.mean.size());
    for (std::size_t j = 0; j < sample.size(); ++j) {
        sample[j] = code.mean[j] + std::sqrt(code.variance[j]) * normal(rng);
    }
    out.sample = std::move(sample);
    return out;
}

FusedBatch fuse(const ExpertSet& experts, ModalitySet subset)
{
    if (!subset.contains(Modality::proprio)) {
        throw ContractError("proprioception must be part of every fused subset, got " + subset.to_string());
    }
    Tensor precision_sum;
    Tensor weighted_sum;
    for (auto m : kModalities) {
        if (!subset.contains(m)) {
            continue;
        }
        const auto& e = experts[index(m)];
        const Tensor precision = nx::exp(nx::neg(e.logvar));
        const Tensor weighted = nx::mul(e.mean, precision);
        if (precision_sum.defined()) {
            precision_sum = nx::add(precision_sum, precision);
            weighted_sum = nx::add(weighted_sum, weighted);
        } else {
            precision_sum = precision;
            weighted_sum = weighted;
        }
    }
    const Tensor total = nx::add_scalar(precision_sum, 1.0);
    FusedBatch out;
    out.variance = nx::div(Tensor::scalar(1.0), total);
    out.mean = nx::mul(weighted_sum, out.variance);
    out.modalities = subset;
    return out;
}

Tensor reparameterize(const FusedBatch& code, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> eps(code.mean.numel());
    for (auto& v : eps) {
        v = normal(rng);
    }
    const Tensor noise(code.mean.shape(), std::move(eps));
    return nx::add(code.mean, nx::mul(nx::sqrt(code.variance), noise));
}

const Tensor& InputBatch::get(Modality m) const
{
    switch (m) {
    case Modality::rgb:
        return rgb;
    case Modality::depth:
        return depth;
    case Modality::force:
        return force;
    case Modality::proprio:
        return proprio;
    }
    throw ContractError("unknown modality id");
}

InputBatch stack_inputs(std::span<const sim::Observation* const> observations)
{
    if (observations.empty()) {
        throw ContractError("cannot stack an empty batch");
    }
    const std::size_t b = observations.size();
    auto gather = [&](auto member, std::size_t width, const char* label) {
        std::vector<double> flat;
        flat.reserve(b * width);
        for (const auto* obs : observations) {
            const auto& v = obs->*member;
            if (v.size() != width) {
                throw DimensionError(std::string(label) + " has " + std::to_string(v.size()) + " values, expected " +
                                     std::to_string(width));
            }
            flat.insert(flat.end(), v.begin(), v.end());
        }
        return Tensor({b, width}, std::move(flat));
    };
    InputBatch in;
    in.rgb = gather(&sim::Observation::rgb, sim::kRgbSize, "rgb");
    in.depth = gather(&sim::Observation::depth, sim::kPixels, "depth");
    in.force = gather(&sim::Observation::force, sim::kForceSize, "force");
    in.proprio = gather(&sim::Observation::proprio, sim::kProprioSize, "proprio");
    in.action = gather(&sim::Observation::action, sim::kActionSize, "action");
    return in;
}

// --- FusionModel -----------------------------------------------------------

std::size_t FusionModel::input_size(Modality m)
{
    switch (m) {
    case Modality::rgb:
        return sim::kRgbSize;
    case Modality::depth:
        return sim::kPixels;
    case Modality::force:
        return sim::kForceSize;
    case Modality::proprio:
        return sim::kProprioSize;
    }
    throw ContractError("unknown modality id");
}

std::size_t FusionModel::output_size(Modality m)
{
    return m == Modality::force ? sim::kForceSteps * kReconForceDims : input_size(m);
}

std::size_t FusionModel::channels(Modality m)
{
    switch (m) {
    case Modality::rgb:
        return 3;
    case Modality::depth:
        return 1;
    case Modality::force:
        return kReconForceDims;
    case Modality::proprio:
        return 1;
    }
    throw ContractError("unknown modality id");
}

FusionModel::FusionModel(const ModelConfig& cfg, std::vector<double> robot_mask, bool zero_force_input)
    : cfg_(cfg), latent_dim_(cfg.latent_dim), zero_force_(zero_force_input), robot_mask_(std::move(robot_mask))
{
    if (latent_dim_ == 0) {
        throw ContractError("latent dimension must be positive");
    }
    if (robot_mask_.size() != sim::kPixels) {
        throw DimensionError("robot mask has " + std::to_string(robot_mask_.size()) + " values, expected " +
                             std::to_string(sim::kPixels));
    }
    for (std::size_t px = 0; px < robot_mask_.size(); ++px) {
        if (robot_mask_[px] > 0.5) {
            mask_pixels_.push_back(px);
        }
    }
    if (mask_pixels_.empty()) {
        throw ContractError("robot mask is empty");
    }

    Rng rng(derive_seed(cfg.seed, {0}));
    const std::size_t d = latent_dim_;
    for (auto m : kModalities) {
        encoders_[index(m)] = nx::Mlp("enc." + std::string(name(m)), with_ends(input_size(m), cfg.encoder_hidden, 2 * d),
                                      nx::Activation::relu, rng);
    }
    auto image_decoder = [&](Modality m) {
        const std::string base = "dec." + std::string(name(m));
        ImageDecoder dec;
        dec.trunk = nx::Mlp(base + ".trunk", with_ends(d, cfg.decoder_hidden, 0), nx::Activation::relu, rng,
                            nx::Activation::relu);
        const std::size_t width = cfg.decoder_hidden.empty() ? d : cfg.decoder_hidden.back();
        dec.full = nx::Linear(base + ".full", width, output_size(m), nx::Activation::none, rng);
        dec.masked = nx::Linear(base + ".masked", width, channels(m) * mask_pixels_.size(), nx::Activation::none, rng);
        return dec;
    };
    if (cfg.decoder_hidden.empty() || cfg.flow_hidden.empty()) {
        throw ContractError("decoder and flow head need at least one hidden layer");
    }
    rgb_decoder_ = image_decoder(Modality::rgb);
    depth_decoder_ = image_decoder(Modality::depth);
    force_decoder_ = nx::Mlp("dec.force", with_ends(d, cfg.decoder_hidden, output_size(Modality::force)),
                             nx::Activation::relu, rng);
    proprio_decoder_ = nx::Mlp("dec.proprio", with_ends(d, cfg.head_hidden, sim::kProprioSize), nx::Activation::relu, rng);

    const std::size_t da = d + sim::kActionSize;
    flow_trunk_ = nx::Mlp("head.flow.trunk", with_ends(da, cfg.flow_hidden, 0), nx::Activation::relu, rng,
                          nx::Activation::relu);
    flow_out_ = nx::Linear("head.flow.uv", cfg.flow_hidden.back(), 2 * mask_pixels_.size(), nx::Activation::none, rng);
    flow_mask_out_ = nx::Linear("head.flow.mask", cfg.flow_hidden.back(), mask_pixels_.size(), nx::Activation::none,
                                rng);
    ee_head_ = nx::Mlp("head.ee", with_ends(da, cfg.head_hidden, 3), nx::Activation::relu, rng);
    contact_head_ = nx::Mlp("head.contact", with_ends(da, cfg.head_hidden, 1), nx::Activation::relu, rng);
    pairing_head_ = nx::Mlp("head.pairing", with_ends(d, cfg.head_hidden, 1), nx::Activation::relu, rng);
}

ExpertBatch FusionModel::encode(Modality m, const Tensor& x) const
{
    const std::size_t width = input_size(m);
    if (x.rank() != 2 || x.dim(1) != width) {
        throw DimensionError(std::string(name(m)) + " encoder expects [B," + std::to_string(width) + "], got " +
                             nx::to_string(x.shape()));
    }
    Tensor input = (m == Modality::force && zero_force_) ? Tensor::zeros(x.shape()) : x;
    const auto& st = input_std_[index(m)];
    if (!st.shift.empty()) {
        std::vector<double> v(input.data().begin(), input.data().end());
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::size_t j = i % width;
            v[i] = (v[i] - st.shift[j]) * st.scale[j];
        }
        input = Tensor(input.shape(), std::move(v));
    }
    const Tensor h = encoders_[index(m)].forward(input);
    ExpertBatch e;
    e.mean = nx::slice(h, 1, 0, latent_dim_);
    e.logvar = nx::clip(nx::slice(h, 1, latent_dim_, 2 * latent_dim_), cfg_.logvar_min, cfg_.logvar_max);
    return e;
}

void FusionModel::set_input_standardization(Modality m, InputStandardization s)
{
    const std::size_t width = input_size(m);
    if (!s.shift.empty() || !s.scale.empty()) {
        if (s.shift.size() != width || s.scale.size() != width) {
            throw DimensionError(std::string(name(m)) + " standardization needs " + std::to_string(width) + " values");
        }
        for (std::size_t i = 0; i < width; ++i) {
            if (!std::isfinite(s.shift[i]) || !std::isfinite(s.scale[i]) || s.scale[i] <= 0.0) {
                throw ContractError(std::string(name(m)) + " standardization must be finite with positive scale");
            }
        }
    }
    input_std_[index(m)] = std::move(s);
}

InputStandardization fit_standardization(const sim::Split& split, Modality m, double std_floor)
{
    if (split.empty()) {
        throw ContractError("cannot fit input statistics on an empty split");
    }
    if (!(std_floor > 0.0)) {
        throw ContractError("pixel std floor must be positive");
    }
    const std::size_t width = FusionModel::input_size(m);
    std::vector<double> sum(width, 0.0);
    std::vector<double> sq(width, 0.0);
    for (const auto& f : split.frames) {
        const auto& x = observation_buffer(f.obs, m);
        for (std::size_t i = 0; i < width; ++i) {
            sum[i] += x[i];
            sq[i] += x[i] * x[i];
        }
    }
    const auto n = static_cast<double>(split.size());
    InputStandardization out;
    out.shift.resize(width);
    out.scale.resize(width);
    for (std::size_t i = 0; i < width; ++i) {
        const double mean = sum[i] / n;
        const double var = std::max(0.0, sq[i] / n - mean * mean);
        out.shift[i] = mean;
        out.scale[i] = 1.0 / std::max(std::sqrt(var), std_floor);
    }
    return out;
}

ExpertSet FusionModel::encode_all(const InputBatch& in) const
{
    ExpertSet out;
    for (auto m : kModalities) {
        out[index(m)] = encode(m, in.get(m));
    }
    return out;
}

FusedBatch FusionModel::encode_fuse(const InputBatch& in, ModalitySet subset) const
{
    ExpertSet experts;
    for (auto m : kModalities) {
        if (subset.contains(m)) {
            experts[index(m)] = encode(m, in.get(m));
        }
    }
    return fuse(experts, subset);
}

const FusionModel::ImageDecoder* FusionModel::image_decoder(Modality m) const
{
    if (m == Modality::rgb) {
        return &rgb_decoder_;
    }
    if (m == Modality::depth) {
        return &depth_decoder_;
    }
    return nullptr;
}

Tensor FusionModel::decode(Modality m, const Tensor& z) const
{
    if (const auto* dec = image_decoder(m)) {
        return dec->full.forward(dec->trunk.forward(z));
    }
    if (m == Modality::force) {
        return force_decoder_.forward(z);
    }
    if (m == Modality::proprio) {
        return proprio_decoder_.forward(z);
    }
    throw ContractError("no decoder for modality id " + std::to_string(static_cast<int>(m)));
}

Tensor FusionModel::decode_masked(Modality m, const Tensor& z) const
{
    const auto* dec = image_decoder(m);
    if (dec == nullptr) {
        throw ContractError("modality '" + std::string(name(m)) + "' has no masked decoder");
    }
    return dec->masked.forward(dec->trunk.forward(z));
}

FlowPrediction FusionModel::predict_flow(const Tensor& z, const Tensor& action) const
{
    const Tensor h = flow_trunk_.forward(nx::concat({z, action}, 1));
    return {flow_out_.forward(h), flow_mask_out_.forward(h)};
}

Tensor FusionModel::predict_ee(const Tensor& z, const Tensor& action) const
{
    return ee_head_.forward(nx::concat({z, action}, 1));
}

Tensor FusionModel::predict_contact(const Tensor& z, const Tensor& action) const
{
    return contact_head_.forward(nx::concat({z, action}, 1));
}

Tensor FusionModel::predict_pairing(const Tensor& z) const { return pairing_head_.forward(z); }

GaussianExpert FusionModel::encode_modality(Modality m, std::span<const double> x) const
{
    nx::NoGradGuard guard;
    const ExpertBatch e = encode(m, Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end())));
    GaussianExpert out;
    out.mean.assign(e.mean.data().begin(), e.mean.data().end());
    for (double lv : e.logvar.data()) {
        out.variance.push_back(std::exp(lv));
    }
    return out;
}

Reconstruction FusionModel::decode_modality(std::span<const double> z, Modality m) const
{
    if (z.size() != latent_dim_) {
        throw DimensionError("latent has " + std::to_string(z.size()) + " dims, model expects " +
                             std::to_string(latent_dim_));
    }
    nx::NoGradGuard guard;
    const Tensor zt({1, z.size()}, std::vector<double>(z.begin(), z.end()));
    Reconstruction r;
    const Tensor full = decode(m, zt);
    r.full.assign(full.data().begin(), full.data().end());
    if (image_decoder(m) != nullptr) {
        const Tensor masked = decode_masked(m, zt);
        const std::size_t c = channels(m);
        const std::size_t n = mask_pixels_.size();
        r.masked.assign(c * sim::kPixels, 0.0);
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t k = 0; k < n; ++k) {
                r.masked[ch * sim::kPixels + mask_pixels_[k]] = masked.at(ch * n + k);
            }
        }
    }
    return r;
}

FlowRaster FusionModel::predict_flow_raster(std::span<const double> z, std::span<const double> action,
                                            double outside_logit) const
{
    if (z.size() != latent_dim_ || action.size() != sim::kActionSize) {
        throw DimensionError("predict_flow_raster: latent or action has the wrong size");
    }
    nx::NoGradGuard guard;
    const auto pred = predict_flow(Tensor({1, z.size()}, std::vector<double>(z.begin(), z.end())),
                                   Tensor({1, action.size()}, std::vector<double>(action.begin(), action.end())));
    const std::size_t n = mask_pixels_.size();
    FlowRaster r;
    r.flow.assign(2 * sim::kPixels, 0.0);
    r.mask_logits.assign(sim::kPixels, outside_logit);
    for (std::size_t k = 0; k < n; ++k) {
        r.flow[mask_pixels_[k]] = pred.flow.at(k);
        r.flow[sim::kPixels + mask_pixels_[k]] = pred.flow.at(n + k);
        r.mask_logits[mask_pixels_[k]] = pred.mask_logits.at(k);
    }
    return r;
}

std::vector<double> FusionModel::gather_mask(std::span<const double> raster, std::size_t c) const
{
    if (raster.size() != c * sim::kPixels) {
        throw DimensionError("gather_mask: raster has " + std::to_string(raster.size()) + " values, expected " +
                             std::to_string(c * sim::kPixels));
    }
    std::vector<double> out;
    out.reserve(c * mask_pixels_.size());
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (auto px : mask_pixels_) {
            out.push_back(raster[ch * sim::kPixels + px]);
        }
    }
    return out;
}

std::vector<nx::Parameter*> FusionModel::parameters()
{
    std::vector<nx::Parameter*> out;
    for (auto& enc : encoders_) {
        enc.collect(out);
    }
    for (auto* dec : {&rgb_decoder_, &depth_decoder_}) {
        dec->trunk.collect(out);
        for (auto* lin : {&dec->full, &dec->masked}) {
            out.push_back(&lin->weight);
            out.push_back(&lin->bias);
        }
    }
    force_decoder_.collect(out);
    proprio_decoder_.collect(out);
    flow_trunk_.collect(out);
    for (auto* lin : {&flow_out_, &flow_mask_out_}) {
        out.push_back(&lin->weight);
        out.push_back(&lin->bias);
    }
    ee_head_.collect(out);
    contact_head_.collect(out);
    pairing_head_.collect(out);
    return out;
}

std::vector<const nx::Parameter*> FusionModel::parameters() const
{
    auto mut = const_cast<FusionModel*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::vector<LayerInfo> FusionModel::layers() const
{
    std::vector<LayerInfo> out;
    for (const auto* p : parameters()) {
        out.push_back({p->name, p->tensor.dim(0), p->tensor.dim(1)});
    }
    return out;
}

std::vector<double> FusionModel::flat_parameters() const
{
    std::vector<double> flat;
    for (const auto* p : parameters()) {
        const auto d = p->tensor.data();
        flat.insert(flat.end(), d.begin(), d.end());
    }
    return flat;
}

void FusionModel::set_flat_parameters(std::span<const double> values)
{
    std::size_t offset = 0;
    auto params = parameters();
    std::size_t total = 0;
    for (const auto* p : params) {
        total += p->tensor.numel();
    }
    if (total != values.size()) {
        throw DimensionError("parameter blob has " + std::to_string(values.size()) + " values, model needs " +
                             std::to_string(total));
    }
    for (auto* p : params) {
        auto dst = p->tensor.mutable_data();
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(offset),
                  values.begin() + static_cast<std::ptrdiff_t>(offset + dst.size()), dst.begin());
        offset += dst.size();
    }
}

// --- checkpoint ------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& dir, const FusionModel& model, const Config& cfg,
                     const sim::NormStats& stats)
{
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = "ccm-checkpoint/1";
    manifest["latent_dim"] = model.latent_dim();
    json modalities = json::array();
    for (auto m : kModalities) {
        modalities.push_back(std::string(name(m)));
    }
    manifest["modalities"] = modalities;
    manifest["zero_force_input"] = model.zero_force_input();
    json layers = json::array();
    std::size_t total = 0;
    for (const auto& l : model.layers()) {
        layers.push_back({{"name", l.name}, {"shape", {l.rows, l.cols}}});
        total += l.rows * l.cols;
    }
    manifest["parameters"] = layers;
    manifest["parameter_count"] = total;
    manifest["params_file"] = "params.bin";
    manifest["config_hash"] = cfg.hash();
    manifest["config"] = cfg.dump();
    manifest["normalization"] = json::parse(sim::stats_json_text(stats));
    std::vector<double> input_stats;
    json standardized = json::array();
    for (auto m : kModalities) {
        const auto& st = model.input_standardization(m);
        if (!st.shift.empty()) {
            standardized.push_back(std::string(name(m)));
            input_stats.insert(input_stats.end(), st.shift.begin(), st.shift.end());
            input_stats.insert(input_stats.end(), st.scale.begin(), st.scale.end());
        }
    }
    manifest["standardized_inputs"] = standardized;
    io::write_f64(dir / "params.bin", model.flat_parameters());
    if (!input_stats.empty()) {
        manifest["input_stats_file"] = "input_stats.bin";
        io::write_f64(dir / "input_stats.bin", input_stats);
    }
    io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir)
{
    json manifest;
    try {
        manifest = json::parse(io::read_text(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw ContractError("bad checkpoint manifest in '" + dir.string() + "': " + e.what());
    }
    if (manifest.value("format", "") != "ccm-checkpoint/1") {
        throw ContractError("'" + dir.string() + "' is not a ccm checkpoint");
    }
    Config cfg = Config::parse(manifest.at("config").get<std::string>());
    if (cfg.hash() != manifest.at("config_hash").get<std::string>()) {
        throw ContractError("checkpoint config does not match its recorded hash");
    }
    sim::NormStats stats = sim::stats_from_json_text(manifest.at("normalization").dump());
    FusionModel model(cfg.model, stats.robot_mask, manifest.value("zero_force_input", false));
    const auto layers = model.layers();
    const auto& recorded = manifest.at("parameters");
    if (recorded.size() != layers.size()) {
        throw ContractError("checkpoint layer list does not match the configured architecture");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto shape = recorded[i].at("shape").get<std::vector<std::size_t>>();
        if (recorded[i].at("name").get<std::string>() != layers[i].name || shape.size() != 2 ||
            shape[0] != layers[i].rows || shape[1] != layers[i].cols) {
            throw ContractError("checkpoint layer '" + recorded[i].at("name").get<std::string>() +
                                "' does not match the configured architecture");
        }
    }
    model.set_flat_parameters(io::read_f64(dir / manifest.value("params_file", "params.bin")));
    const auto standardized = manifest.value("standardized_inputs", json::array());
    if (!standardized.empty()) {
        const auto values = io::read_f64(dir / manifest.value("input_stats_file", "input_stats.bin"));
        std::size_t at = 0;
        for (const auto& entry : standardized) {
            const Modality m = parse_modality(entry.get<std::string>());
            const std::size_t width = FusionModel::input_size(m);
            if (values.size() < at + 2 * width) {
                throw ContractError("checkpoint input statistics are truncated");
            }
            const auto* v = values.data() + at;
            model.set_input_standardization(m, {std::vector<double>(v, v + width),
                                                std::vector<double>(v + width, v + 2 * width)});
            at += 2 * width;
        }
        if (at != values.size()) {
            throw ContractError("checkpoint input statistics have trailing values");
        }
    }
    return Checkpoint{std::move(cfg), std::move(stats), std::move(model)};
}

} // namespace ccm::model
