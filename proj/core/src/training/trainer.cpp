#include "ccm/training/trainer.hpp"

#include "ccm/error.hpp"
#include "ccm/training/losses.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace ccm::training {

using model::Modality;
using nx::Tensor;

namespace {

Tensor rows_tensor(const std::vector<const sim::Frame*>& frames, std::size_t width, auto&& fill)
{
    std::vector<double> flat;
    flat.reserve(frames.size() * width);
    for (const auto* f : frames) {
        fill(*f, flat);
    }
    return Tensor({frames.size(), width}, std::move(flat));
}

/// Masked-region targets in the decoder's channel-major layout.
Tensor masked_target(const std::vector<const sim::Frame*>& frames, const model::FusionModel& model,
                     std::size_t channels, auto&& select)
{
    return rows_tensor(frames, channels * model.mask_pixels().size(), [&](const sim::Frame& f, std::vector<double>& out) {
        const auto v = model.gather_mask(select(f), channels);
        out.insert(out.end(), v.begin(), v.end());
    });
}

/// fx, fy, fz of every window row, time-major.
Tensor force_target(const std::vector<const sim::Frame*>& frames)
{
    return rows_tensor(frames, sim::kForceSteps * 3, [](const sim::Frame& f, std::vector<double>& out) {
        for (std::size_t t = 0; t < sim::kForceSteps; ++t) {
            for (std::size_t k = 0; k < 3; ++k) {
                out.push_back(f.obs.force[t * sim::kWrenchDims + k]);
            }
        }
    });
}

struct Targets {
    Tensor rgb_masked;
    Tensor depth_masked;
    Tensor force;
    Tensor flow;
    Tensor flow_mask;
    Tensor next_ee;
    Tensor next_contact;
};

Targets make_targets(const std::vector<const sim::Frame*>& frames, const model::FusionModel& model)
{
    Targets t;
    t.rgb_masked = masked_target(frames, model, 3, [](const sim::Frame& f) -> const auto& { return f.obs.rgb; });
    t.depth_masked = masked_target(frames, model, 1, [](const sim::Frame& f) -> const auto& { return f.obs.depth; });
    t.force = force_target(frames);
    t.flow = masked_target(frames, model, 2, [](const sim::Frame& f) -> const auto& { return f.labels.flow; });
    t.flow_mask =
        masked_target(frames, model, 1, [](const sim::Frame& f) -> const auto& { return f.labels.flow_mask; });
    t.next_ee = rows_tensor(frames, 3, [](const sim::Frame& f, std::vector<double>& out) {
        out.insert(out.end(), f.labels.next_ee_pos.begin(), f.labels.next_ee_pos.end());
    });
    t.next_contact = rows_tensor(frames, 1, [](const sim::Frame& f, std::vector<double>& out) {
        out.push_back(f.labels.next_contact ? 1.0 : 0.0);
    });
    return t;
}

class Accumulator {
public:
    explicit Accumulator(const LossWeights& w) : w_(w) {}

    double weight(Term t) const
    {
        switch (t) {
        case Term::recon:
            return w_.recon;
        case Term::recon_mask:
            return w_.recon_mask;
        case Term::kl:
            return w_.kl;
        case Term::flow:
            return w_.flow;
        case Term::flow_mask:
            return w_.flow_mask;
        case Term::ee_pos:
            return w_.ee_pos;
        case Term::contact:
            return w_.next_contact;
        case Term::pairing:
            return w_.pairing;
        case Term::latent_dist:
            return w_.latent_dist;
        }
        return 0.0;
    }

    bool active(Term t) const { return weight(t) != 0.0; }

    void add(Term t, const Tensor& unweighted)
    {
        const Tensor weighted = nx::scale(unweighted, weight(t));
        report_[t] += weighted.item();
        total_ = total_.defined() ? nx::add(total_, weighted) : weighted;
    }

    StepLosses finish()
    {
        report_.sum_terms();
        if (!std::isfinite(report_.total)) {
            std::ostringstream msg;
            msg << "non-finite total loss:";
            for (std::size_t i = 0; i < kTermCount; ++i) {
                msg << ' ' << term_name(static_cast<Term>(i)) << '=' << report_.terms[i];
            }
            throw NumericError(msg.str());
        }
        if (!total_.defined()) {
            total_ = Tensor::scalar(0.0);
        }
        return {report_, total_};
    }

private:
    LossWeights w_;
    LossReport report_;
    Tensor total_;
};

/// Decoder, KL and head losses for one latent sample of the paired rows.
void supervised_terms(Accumulator& acc, const model::FusionModel& model, const model::FusedBatch& code,
                      const Tensor& z, const model::InputBatch& in, const Targets& t, double l1_weight)
{
    if (acc.active(Term::recon)) {
        Tensor sum = recon_loss(model.decode(Modality::rgb, z), in.rgb, l1_weight);
        sum = nx::add(sum, recon_loss(model.decode(Modality::depth, z), in.depth, l1_weight));
        sum = nx::add(sum, recon_loss(model.decode(Modality::force, z), t.force, l1_weight));
        sum = nx::add(sum, recon_loss(model.decode(Modality::proprio, z), in.proprio, l1_weight));
        acc.add(Term::recon, sum);
    }
    if (acc.active(Term::recon_mask)) {
        acc.add(Term::recon_mask, nx::add(mse(model.decode_masked(Modality::rgb, z), t.rgb_masked),
                                          mse(model.decode_masked(Modality::depth, z), t.depth_masked)));
    }
    if (acc.active(Term::kl)) {
        acc.add(Term::kl, kl_to_standard_normal(code.mean, code.variance));
    }
    if (acc.active(Term::flow) || acc.active(Term::flow_mask)) {
        const auto pred = model.predict_flow(z, in.action);
        if (acc.active(Term::flow)) {
            acc.add(Term::flow, flow_epe(pred.flow, t.flow, t.flow_mask));
        }
        if (acc.active(Term::flow_mask)) {
            acc.add(Term::flow_mask, bce_with_logits(pred.mask_logits, t.flow_mask));
        }
    }
    if (acc.active(Term::ee_pos)) {
        acc.add(Term::ee_pos, mse(model.predict_ee(z, in.action), t.next_ee));
    }
    if (acc.active(Term::contact)) {
        acc.add(Term::contact, bce_with_logits(model.predict_contact(z, in.action), t.next_contact));
    }
}

model::ExpertSet slice_rows(const model::ExpertSet& experts, std::size_t rows)
{
    model::ExpertSet out;
    for (std::size_t i = 0; i < experts.size(); ++i) {
        if (experts[i].mean.dim(0) == rows) {
            out[i] = experts[i];
        } else {
            out[i].mean = nx::slice(experts[i].mean, 0, 0, rows);
            out[i].logvar = nx::slice(experts[i].logvar, 0, 0, rows);
        }
    }
    return out;
}

} // namespace

std::string_view term_name(Term t)
{
    static constexpr std::array<std::string_view, kTermCount> names{
        "recon", "recon_mask", "kl", "flow", "flow_mask", "ee_pos", "contact", "pairing", "latent_dist"};
    return names[static_cast<std::size_t>(t)];
}

void LossReport::sum_terms()
{
    total = 0.0;
    for (double v : terms) {
        total += v;
    }
}

StepOptions step_options(const Config& cfg)
{
    StepOptions o;
    o.weights = effective_weights(cfg.loss, cfg.train.ablation);
    o.l1_weight = cfg.loss.recon_l1;
    o.drop_rate = cfg.train.drop_rate;
    o.detach_full_target = cfg.train.detach_full_target;
    return o;
}

StepLosses compute_losses(const model::FusionModel& model, const StepBatch& batch, const StepOptions& options,
                          Rng& rng)
{
    if (batch.paired.empty()) {
        throw ContractError("training step needs at least one paired frame");
    }
    const std::size_t b = batch.paired.size();
    Accumulator acc(options.weights);

    const bool pairing = acc.active(Term::pairing) && !batch.negatives.empty();
    std::vector<const sim::Observation*> obs;
    for (const auto* f : batch.paired) {
        obs.push_back(&f->obs);
    }
    if (pairing) {
        for (const auto& f : batch.negatives) {
            obs.push_back(&f.obs);
        }
    }
    const model::InputBatch all = model::stack_inputs(obs);
    const model::ExpertSet experts_all = model.encode_all(all);
    const model::InputBatch in =
        pairing ? model::stack_inputs(std::span(obs).first(b)) : all;
    const model::ExpertSet experts = slice_rows(experts_all, b);
    const Targets targets = make_targets(batch.paired, model);

    // Pass 1: all modalities.
    const model::FusedBatch full = model::fuse(experts, model::ModalitySet::all());
    const Tensor z = model::reparameterize(full, rng);
    supervised_terms(acc, model, full, z, in, targets, options.l1_weight);

    if (pairing) {
        const model::FusedBatch full_all = model::fuse(experts_all, model::ModalitySet::all());
        const Tensor z_all = nx::concat({z, nx::slice(model::reparameterize(full_all, rng), 0, b, all.rows())}, 0);
        std::vector<double> labels(all.rows(), 0.0);
        for (std::size_t i = 0; i < b; ++i) {
            labels[i] = 1.0;
        }
        acc.add(Term::pairing, bce_with_logits(model.predict_pairing(z_all), Tensor({all.rows(), 1}, labels)));
    }

    // Pass 2: one of rgb/depth/force removed.
    std::optional<Modality> drop = options.drop;
    if (!drop && options.drop_rate > 0.0) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> pick(0, model::kDroppable.size() - 1);
        const double roll = u(rng);
        const std::size_t which = pick(rng);
        if (roll < options.drop_rate) {
            drop = model::kDroppable[which];
        }
    }
    if (drop) {
        const model::FusedBatch dropped = model::fuse(experts, model::ModalitySet::all_but(*drop));
        const Tensor z_drop = model::reparameterize(dropped, rng);
        supervised_terms(acc, model, dropped, z_drop, in, targets, options.l1_weight);
        if (acc.active(Term::latent_dist)) {
            const Tensor target = options.detach_full_target ? full.mean.detach() : full.mean;
            acc.add(Term::latent_dist, latent_distance(target, dropped.mean));
        }
    }
    return acc.finish();
}

LossReport training_step(model::FusionModel& model, const StepBatch& batch, const StepOptions& options,
                         const nx::AdamOptions& adam, Rng& rng)
{
    auto params = model.parameters();
    nx::zero_grads(params);
    StepLosses losses = compute_losses(model, batch, options, rng);
    if (losses.total.requires_grad()) {
        losses.total.backward();
    }
    nx::adam_step(params, adam);
    return losses.report;
}

std::vector<double> contact_balance_weights(const sim::Split& split)
{
    std::size_t contact = 0;
    for (const auto& f : split.frames) {
        contact += f.meta.in_contact ? 1 : 0;
    }
    const std::size_t free = split.size() - contact;
    std::vector<double> w(split.size(), 1.0);
    if (contact == 0 || free == 0) {
        return w;
    }
    for (std::size_t i = 0; i < split.size(); ++i) {
        w[i] = split.frames[i].meta.in_contact ? 1.0 / static_cast<double>(contact) : 1.0 / static_cast<double>(free);
    }
    return w;
}

namespace {

std::vector<sim::Frame> make_negatives(const std::vector<const sim::Frame*>& paired, const sim::Split& pool,
                                       const Config& cfg, Rng& rng)
{
    const auto n = static_cast<std::size_t>(std::lround(cfg.train.pairing_rate * static_cast<double>(paired.size())));
    std::vector<sim::Frame> out;
    out.reserve(n);
    std::uniform_int_distribution<std::size_t> pick(0, paired.size() - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto* src = paired[pick(rng)];
        out.push_back(sim::make_unpaired(*src, pool, rng(), cfg.data.unpaired_min_distance,
                                         cfg.data.unpaired_max_draws));
    }
    return out;
}

void accumulate(LossReport& into, const LossReport& step)
{
    for (std::size_t i = 0; i < kTermCount; ++i) {
        into.terms[i] += step.terms[i];
    }
}

void average(LossReport& r, std::size_t count)
{
    for (auto& v : r.terms) {
        v /= static_cast<double>(count);
    }
    r.sum_terms();
}

} // namespace

LossReport evaluate_losses(const model::FusionModel& model, const sim::Split& split, const sim::Split& pool,
                           const Config& cfg, std::uint64_t seed)
{
    if (split.empty()) {
        throw ContractError("cannot evaluate losses on an empty split");
    }
    nx::NoGradGuard guard;
    Rng rng(seed);
    const StepOptions options = step_options(cfg);
    const auto batch_size = static_cast<std::size_t>(cfg.train.batch);
    LossReport sum;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < split.size(); start += batch_size) {
        StepBatch batch;
        for (std::size_t i = start; i < std::min(split.size(), start + batch_size); ++i) {
            batch.paired.push_back(&split.frames[i]);
        }
        batch.negatives = make_negatives(batch.paired, pool, cfg, rng);
        accumulate(sum, compute_losses(model, batch, options, rng).report);
        ++batches;
    }
    average(sum, batches);
    return sum;
}

TrainResult train(const sim::Dataset& data, const Config& cfg, std::ostream* progress)
{
    cfg.validate();
    if (data.train.empty()) {
        throw ContractError("cannot train on an empty dataset");
    }
    TrainResult result{model::FusionModel(cfg.model, data.stats.robot_mask, cfg.train.ablation.zero_force), {}};
    auto& model = result.model;
    if (cfg.model.standardize_rgb) {
        model.set_input_standardization(model::Modality::rgb,
                                        model::fit_standardization(data.train, model::Modality::rgb, cfg.model.rgb_std_floor));
    }
    if (cfg.model.standardize_depth) {
        model.set_input_standardization(model::Modality::depth, model::fit_standardization(data.train, model::Modality::depth,
                                                                                           cfg.model.depth_std_floor));
    }
    const StepOptions options = step_options(cfg);
    const nx::AdamOptions adam{cfg.train.lr, cfg.train.beta1, cfg.train.beta2, cfg.train.eps};
    const auto batch_size = static_cast<std::size_t>(cfg.train.batch);

    std::vector<double> weights = cfg.train.contact_balance ? contact_balance_weights(data.train)
                                                           : std::vector<double>(data.train.size(), 1.0);
    std::discrete_distribution<std::size_t> sampler(weights.begin(), weights.end());
    Rng rng(derive_seed(cfg.train.seed, {0}));

    for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
        std::vector<std::size_t> order(data.train.size());
        for (auto& i : order) {
            i = sampler(rng);
        }
        LossReport sum;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            StepBatch batch;
            for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
                batch.paired.push_back(&data.train.frames[order[i]]);
            }
            batch.negatives = make_negatives(batch.paired, data.train, cfg, rng);
            accumulate(sum, training_step(model, batch, options, adam, rng));
            ++batches;
        }
        average(sum, batches);
        result.history.push_back({epoch, "train", sum});
        if (!data.val.empty()) {
            const auto val_seed = derive_seed(cfg.train.seed, {1, static_cast<std::uint64_t>(epoch)});
            result.history.push_back({epoch, "val", evaluate_losses(model, data.val, data.val, cfg, val_seed)});
        }
        if (progress != nullptr) {
            *progress << "epoch " << epoch << "/" << cfg.train.epochs << " train_total=" << sum.total;
            if (!data.val.empty()) {
                *progress << " val_total=" << result.history.back().report.total;
            }
            *progress << std::endl;
        }
    }
    return result;
}

std::string loss_csv(const std::vector<EpochLoss>& history, const std::string& config_hash, std::uint64_t seed)
{
    std::ostringstream os;
    os << "# config_hash=" << config_hash << " seed=" << seed << "\n";
    os << "epoch,split";
    for (std::size_t i = 0; i < kTermCount; ++i) {
        os << ',' << term_name(static_cast<Term>(i));
    }
    os << ",total\n";
    os << std::setprecision(17);
    for (const auto& row : history) {
        os << row.epoch << ',' << row.split;
        for (double v : row.report.terms) {
            os << ',' << v;
        }
        os << ',' << row.report.total << "\n";
    }
    return os.str();
}

} // namespace ccm::training
