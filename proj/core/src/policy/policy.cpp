#include "ccm/policy/policy.hpp"

#include "ccm/corruption/corruption.hpp"
#include "ccm/error.hpp"
#include "ccm/io/binary.hpp"
#include "ccm/pipeline/pipeline.hpp"
#include "ccm/sim/env.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

namespace ccm::policy {

using model::Modality;
using nlohmann::json;
using nx::Tensor;

namespace {

/// Broadcast a [1,k] row to [rows,k] (differentiable).
Tensor repeat_rows(const Tensor& row, std::size_t rows)
{
    return nx::matmul(Tensor::full({rows, 1}, 1.0), row);
}

std::vector<std::size_t> layer_sizes(std::size_t d, const std::vector<std::size_t>& hidden)
{
    std::vector<std::size_t> sizes{d};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(sim::kActionSize);
    return sizes;
}

Tensor target_actions(const sim::Split& split, double max_action)
{
    std::vector<double> flat;
    flat.reserve(split.size() * sim::kActionSize);
    for (const auto& f : split.frames) {
        for (double a : f.labels.expert_action) {
            flat.push_back(a / max_action);
        }
    }
    return Tensor({split.size(), sim::kActionSize}, std::move(flat));
}

Tensor take_rows(const Tensor& t, std::span<const std::size_t> rows)
{
    const std::size_t w = t.dim(1);
    std::vector<double> flat;
    flat.reserve(rows.size() * w);
    const auto src = t.data();
    for (auto r : rows) {
        flat.insert(flat.end(), src.begin() + static_cast<std::ptrdiff_t>(r * w),
                    src.begin() + static_cast<std::ptrdiff_t>((r + 1) * w));
    }
    return Tensor({rows.size(), w}, std::move(flat));
}

double mean_nll(const Policy& p, const Tensor& z, const Tensor& target)
{
    nx::NoGradGuard guard;
    return p.nll(z, target).item();
}

} // namespace

Policy::Policy(std::size_t latent_dim, const PolicyConfig& cfg, double max_action)
    : cfg_(cfg), max_action_(max_action), input_mean_(latent_dim, 0.0), input_std_(latent_dim, 1.0)
{
    if (latent_dim == 0 || !(max_action > 0.0)) {
        throw ContractError("policy needs a positive latent size and action bound");
    }
    if (!(cfg.log_std_min < cfg.log_std_max)) {
        throw ContractError("policy log-std bounds are empty");
    }
    Rng rng(cfg.seed);
    net_ = nx::Mlp("policy", layer_sizes(latent_dim, cfg.hidden), nx::Activation::tanh, rng);
    log_std_ = nx::Parameter("policy.log_std", Tensor::zeros({1, sim::kActionSize}));
}

void Policy::set_input_stats(std::vector<double> mean, std::vector<double> std)
{
    if (mean.size() != latent_dim() || std.size() != latent_dim()) {
        throw DimensionError("policy input statistics must have " + std::to_string(latent_dim()) + " entries");
    }
    for (double s : std) {
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw ContractError("policy input std must be positive");
        }
    }
    input_mean_ = std::move(mean);
    input_std_ = std::move(std);
}

Tensor Policy::standardize(const Tensor& z) const
{
    if (z.rank() != 2 || z.dim(1) != latent_dim()) {
        throw DimensionError("policy expects latent rows of width " + std::to_string(latent_dim()) + ", got " +
                             nx::to_string(z.shape()));
    }
    std::vector<double> out(z.data().begin(), z.data().end());
    const std::size_t d = latent_dim();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (out[i] - input_mean_[i % d]) / input_std_[i % d];
    }
    return Tensor(z.shape(), std::move(out));
}

Tensor Policy::mean(const Tensor& z) const { return net_.forward(standardize(z)); }

Tensor Policy::log_std() const { return nx::clip(log_std_.tensor, cfg_.log_std_min, cfg_.log_std_max); }

Tensor Policy::nll(const Tensor& z, const Tensor& target) const
{
    const std::size_t rows = z.dim(0);
    const Tensor mu = mean(z);
    const Tensor ls = repeat_rows(log_std(), rows);
    const Tensor err = nx::mul(nx::sub(target, mu), nx::exp(nx::neg(ls)));
    // 0.5 ((a - mu)/sigma)^2 + log sigma + 0.5 log 2 pi, summed over dims.
    Tensor per = nx::add(nx::scale(nx::square(err), 0.5), ls);
    const double constant = 0.5 * std::log(2.0 * std::numbers::pi) * static_cast<double>(sim::kActionSize);
    return nx::add_scalar(nx::scale(nx::sum(per), 1.0 / static_cast<double>(rows)), constant);
}

std::vector<sim::Vec3> Policy::act_batch(const std::vector<const model::LatentCode*>& codes) const
{
    std::vector<sim::Vec3> out;
    if (codes.empty()) {
        return out;
    }
    std::vector<double> flat;
    flat.reserve(codes.size() * latent_dim());
    for (const auto* c : codes) {
        if (c->mean.size() != latent_dim()) {
            throw DimensionError("latent code has " + std::to_string(c->mean.size()) + " dims, policy expects " +
                                 std::to_string(latent_dim()));
        }
        flat.insert(flat.end(), c->mean.begin(), c->mean.end());
    }
    nx::NoGradGuard guard;
    const Tensor mu = mean(Tensor({codes.size(), latent_dim()}, std::move(flat)));
    SimConfig bounds;
    bounds.max_action = max_action_;
    for (std::size_t r = 0; r < codes.size(); ++r) {
        sim::Vec3 a{};
        for (std::size_t k = 0; k < sim::kActionSize; ++k) {
            a[k] = mu.at(r * sim::kActionSize + k) * max_action_;
        }
        out.push_back(sim::clip_action(a, bounds));
    }
    return out;
}

sim::Vec3 Policy::act(const model::LatentCode& code) const { return act_batch({&code}).front(); }

std::vector<nx::Parameter*> Policy::parameters()
{
    std::vector<nx::Parameter*> out;
    net_.collect(out);
    out.push_back(&log_std_);
    return out;
}

std::vector<const nx::Parameter*> Policy::parameters() const
{
    auto mut = const_cast<Policy*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::vector<double> Policy::flat_parameters() const
{
    std::vector<double> flat;
    for (const auto* p : parameters()) {
        const auto d = p->tensor.data();
        flat.insert(flat.end(), d.begin(), d.end());
    }
    return flat;
}

void Policy::set_flat_parameters(std::span<const double> values)
{
    auto params = parameters();
    std::size_t total = 0;
    for (const auto* p : params) {
        total += p->tensor.numel();
    }
    if (total != values.size()) {
        throw DimensionError("policy blob has " + std::to_string(values.size()) + " values, expected " +
                             std::to_string(total));
    }
    std::size_t offset = 0;
    for (auto* p : params) {
        auto dst = p->tensor.mutable_data();
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
        offset += dst.size();
    }
}

Tensor latent_means(const sim::Split& split, const model::FusionModel& model)
{
    nx::NoGradGuard guard;
    const std::size_t d = model.latent_dim();
    std::vector<double> flat;
    flat.reserve(split.size() * d);
    constexpr std::size_t chunk = 256;
    for (std::size_t start = 0; start < split.size(); start += chunk) {
        std::vector<const sim::Observation*> obs;
        for (std::size_t i = start; i < std::min(split.size(), start + chunk); ++i) {
            obs.push_back(&split.frames[i].obs);
        }
        const Tensor mu = model.encode_fuse(model::stack_inputs(obs)).mean;
        flat.insert(flat.end(), mu.data().begin(), mu.data().end());
    }
    return Tensor({split.size(), d}, std::move(flat));
}

BcResult bc_train(const sim::Dataset& data, const model::FusionModel& model, const Config& cfg,
                  std::ostream* progress)
{
    if (data.train.empty()) {
        throw ContractError("behavior cloning needs a nonempty training split");
    }
    const double max_action = cfg.sim.max_action;
    const std::size_t d = model.latent_dim();
    BcResult result{Policy(d, cfg.policy, max_action), 0.0, {}};
    Policy& policy = result.policy;

    const Tensor z_train = latent_means(data.train, model);
    const Tensor a_train = target_actions(data.train, max_action);
    const sim::Split& val_split = data.val.empty() ? data.train : data.val;
    const Tensor z_val = latent_means(val_split, model);
    const Tensor a_val = target_actions(val_split, max_action);

    std::vector<double> mu(d, 0.0);
    std::vector<double> sd(d, 0.0);
    const auto zt = z_train.data();
    const auto n = static_cast<double>(data.train.size());
    for (std::size_t i = 0; i < zt.size(); ++i) {
        mu[i % d] += zt[i] / n;
    }
    for (std::size_t i = 0; i < zt.size(); ++i) {
        sd[i % d] += (zt[i] - mu[i % d]) * (zt[i] - mu[i % d]) / n;
    }
    for (auto& s : sd) {
        s = std::max(std::sqrt(s), 1e-6);
    }
    policy.set_input_stats(mu, sd);
    result.initial_val_nll = mean_nll(policy, z_val, a_val);

    const nx::AdamOptions adam{cfg.policy.lr, 0.9, 0.999, 1e-8};
    const auto batch = static_cast<std::size_t>(cfg.policy.batch);
    Rng rng(derive_seed(cfg.policy.seed, {1}));
    std::vector<std::size_t> order(data.train.size());
    auto params = policy.parameters();
    for (int epoch = 1; epoch <= cfg.policy.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i);
            std::swap(order[i], order[pick(rng)]);
        }
        double sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const auto rows = std::span(order).subspan(start, std::min(batch, order.size() - start));
            nx::zero_grads(params);
            const Tensor loss = policy.nll(take_rows(z_train, rows), take_rows(a_train, rows));
            loss.backward();
            nx::adam_step(params, adam);
            sum += loss.item();
            ++steps;
        }
        BcEpoch e{epoch, sum / static_cast<double>(steps), mean_nll(policy, z_val, a_val)};
        result.history.push_back(e);
        if (progress != nullptr) {
            *progress << "policy epoch " << epoch << "/" << cfg.policy.epochs << " train_nll=" << e.train_nll
                      << " val_nll=" << e.val_nll << std::endl;
        }
    }
    return result;
}

std::string bc_csv(const BcResult& result, const std::string& config_hash, std::uint64_t seed)
{
    std::ostringstream os;
    os << "# config_hash=" << config_hash << " seed=" << seed << "\n";
    os << "epoch,train_nll,val_nll\n" << std::setprecision(17);
    os << "0,," << result.initial_val_nll << "\n";
    for (const auto& e : result.history) {
        os << e.epoch << ',' << e.train_nll << ',' << e.val_nll << "\n";
    }
    return os.str();
}

std::string parameter_hash(std::span<const double> values)
{
    std::string bytes(values.size() * sizeof(double), '\0');
    std::memcpy(bytes.data(), values.data(), bytes.size());
    return io::fnv1a_hex(bytes);
}

void save_policy(const std::filesystem::path& file, const Policy& policy, const Config& cfg,
                 const std::string& representation_hash)
{
    json j;
    j["format"] = "ccm-policy/1";
    j["config_hash"] = cfg.hash();
    j["seed"] = cfg.policy.seed;
    j["representation_hash"] = representation_hash;
    j["latent_dim"] = policy.latent_dim();
    j["hidden"] = cfg.policy.hidden;
    j["activation"] = "tanh";
    j["log_std_bounds"] = {cfg.policy.log_std_min, cfg.policy.log_std_max};
    j["max_action"] = policy.max_action();
    j["input_mean"] = policy.input_mean();
    j["input_std"] = policy.input_std();
    j["parameters"] = policy.flat_parameters();
    if (file.has_parent_path()) {
        std::filesystem::create_directories(file.parent_path());
    }
    io::write_text(file, j.dump() + "\n");
}

LoadedPolicy load_policy(const std::filesystem::path& file)
{
    try {
        const json j = json::parse(io::read_text(file));
        if (j.value("format", "") != "ccm-policy/1") {
            throw ContractError("'" + file.string() + "' is not a ccm policy");
        }
        PolicyConfig pc;
        pc.hidden = j.at("hidden").get<std::vector<std::size_t>>();
        const auto bounds = j.at("log_std_bounds").get<std::array<double, 2>>();
        pc.log_std_min = bounds[0];
        pc.log_std_max = bounds[1];
        pc.seed = j.at("seed").get<std::uint64_t>();
        LoadedPolicy out{Policy(j.at("latent_dim").get<std::size_t>(), pc, j.at("max_action").get<double>()),
                         j.at("config_hash").get<std::string>(), j.at("representation_hash").get<std::string>()};
        out.policy.set_input_stats(j.at("input_mean").get<std::vector<double>>(),
                                   j.at("input_std").get<std::vector<double>>());
        out.policy.set_flat_parameters(j.at("parameters").get<std::vector<double>>());
        return out;
    } catch (const json::exception& e) {
        throw ContractError("bad policy file '" + file.string() + "': " + e.what());
    }
}

// --- evaluation --------------------------------------------------------------

std::string_view condition_name(Condition c)
{
    switch (c) {
    case Condition::normal:
        return "normal";
    case Condition::compensated:
        return "compensated";
    case Condition::not_compensated:
        return "not_compensated";
    }
    return "?";
}

EvalResult rollout_eval(const EvalContext& ctx, Condition condition, std::optional<Modality> corrupt, int episodes,
                        std::uint64_t seed, std::ostream* log)
{
    if (episodes <= 0) {
        throw ContractError("evaluation needs at least one episode");
    }
    if (condition != Condition::normal && !corrupt) {
        throw ContractError(std::string(condition_name(condition)) + " evaluation needs a corrupted modality");
    }
    if (corrupt && *corrupt == Modality::proprio) {
        throw ContractError("proprio is never corrupted");
    }
    if (condition == Condition::compensated && !ctx.table.calibrated) {
        throw ContractError("compensated evaluation needs a calibrated threshold table");
    }
    const auto mode = condition == Condition::compensated ? pipeline::Mode::detect_correct : pipeline::Mode::full;
    const auto n = static_cast<std::size_t>(episodes);
    const auto apply_ctx = corruption::make_context(ctx.stats);

    std::vector<sim::EnvState> states;
    std::vector<Rng> corruption_rngs;
    for (std::size_t e = 0; e < n; ++e) {
        states.push_back(sim::reset(derive_seed(seed, {e})));
        const std::uint64_t m = corrupt ? static_cast<std::uint64_t>(*corrupt) : 9;
        corruption_rngs.emplace_back(derive_seed(seed, {1, e, m}));
    }
    EvalResult result;
    result.condition = condition;
    result.modality = corrupt;
    result.successes.assign(n, false);
    result.steps.assign(n, 0);

    std::vector<std::size_t> active(n);
    for (std::size_t e = 0; e < n; ++e) {
        active[e] = e;
    }
    for (int t = 0; t < ctx.cfg.sim.horizon && !active.empty(); ++t) {
        std::vector<sim::Observation> obs;
        std::vector<std::optional<corruption::CorruptionSpec>> specs;
        obs.reserve(active.size());
        for (auto e : active) {
            sim::Observation o = sim::make_observation(states[e], ctx.cfg.sim, ctx.stats);
            std::optional<corruption::CorruptionSpec> spec;
            if (corrupt) {
                spec = corruption::sample_spec(*corrupt, corruption_rngs[e], ctx.cfg.corruption);
                o = corruption::apply(*spec, o, apply_ctx);
            }
            obs.push_back(std::move(o));
            specs.push_back(spec);
        }
        std::vector<const sim::Observation*> ptrs;
        for (const auto& o : obs) {
            ptrs.push_back(&o);
        }
        const auto comp = pipeline::compensate_batch(ptrs, ctx.model, ctx.table, mode);
        std::vector<const model::LatentCode*> codes;
        for (const auto& c : comp) {
            codes.push_back(&c.code);
        }
        const auto actions = ctx.policy.act_batch(codes);

        std::vector<std::size_t> still;
        for (std::size_t i = 0; i < active.size(); ++i) {
            const auto e = active[i];
            states[e] = sim::step(states[e], actions[i], ctx.cfg.sim).state;
            result.steps[e] = t + 1;
            const bool done = states[e].success;
            if (log != nullptr) {
                json line;
                line["condition"] = condition_name(condition);
                line["modality"] = corrupt ? json(std::string(model::name(*corrupt))) : json(nullptr);
                line["episode"] = e;
                line["step"] = t;
                line["corruption"] = specs[i] ? json::parse(specs[i]->to_json()) : json(nullptr);
                line["detection"] = json::parse(comp[i].detection.to_json());
                line["fused"] = comp[i].code.fused_modalities.to_string();
                line["action"] = actions[i];
                line["success"] = done;
                *log << line.dump() << "\n";
            }
            if (done) {
                result.successes[e] = true;
            } else {
                still.push_back(e);
            }
        }
        active = std::move(still);
    }
    const auto wins = std::count(result.successes.begin(), result.successes.end(), true);
    result.success_rate = static_cast<double>(wins) / static_cast<double>(n);
    return result;
}

} // namespace ccm::policy
