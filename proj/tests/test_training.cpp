#include "ccm/error.hpp"
#include "ccm/training/losses.hpp"
#include "ccm/training/trainer.hpp"

#include "doctest.h"
#include "support.hpp"

#include <cmath>

using namespace ccm;
using namespace ccm::training;
using nx::Tensor;

namespace {

StepBatch tiny_batch(std::size_t n, std::uint64_t seed)
{
    const auto& data = test::tiny_dataset();
    StepBatch b;
    for (std::size_t i = 0; i < n; ++i) {
        b.paired.push_back(&data.train.frames[(i * 13 + 5) % data.train.size()]);
    }
    for (std::size_t i = 0; i < n / 2; ++i) {
        b.negatives.push_back(sim::make_unpaired(*b.paired[i], data.train, seed + i));
    }
    return b;
}

model::FusionModel tiny_model()
{
    return model::FusionModel(test::tiny_config().model, test::tiny_dataset().stats.robot_mask);
}

LossWeights only(Term t, double w)
{
    LossWeights z{0, 0, 0, 0, 0, 0, 0, 0, 0, 0.2};
    switch (t) {
    case Term::recon:
        z.recon = w;
        break;
    case Term::recon_mask:
        z.recon_mask = w;
        break;
    case Term::kl:
        z.kl = w;
        break;
    case Term::flow:
        z.flow = w;
        break;
    case Term::flow_mask:
        z.flow_mask = w;
        break;
    case Term::ee_pos:
        z.ee_pos = w;
        break;
    case Term::contact:
        z.next_contact = w;
        break;
    case Term::pairing:
        z.pairing = w;
        break;
    case Term::latent_dist:
        z.latent_dist = w;
        break;
    }
    return z;
}

} // namespace

TEST_CASE("loss closed forms")
{
    CHECK(kl_to_standard_normal(Tensor::matrix({{0, 0}}), Tensor::matrix({{1, 1}})).item() == 0.0);
    CHECK(kl_to_standard_normal(Tensor::matrix({{1}}), Tensor::matrix({{1}})).item() == doctest::Approx(0.5));
    const Tensor x = Tensor::matrix({{0.3, -0.2}, {1.0, 2.0}});
    CHECK(recon_loss(x, x).item() == 0.0);
    // one row, one pixel: u plane then v plane
    CHECK(flow_epe(Tensor::matrix({{3, 4}}), Tensor::matrix({{0, 0}}), Tensor::matrix({{1}})).item() ==
          doctest::Approx(5.0));
    CHECK(flow_epe(Tensor::matrix({{3, 4}}), Tensor::matrix({{3, 4}}), Tensor::matrix({{1}})).item() == 0.0);
    CHECK(bce_with_logits(Tensor::matrix({{0}}), Tensor::matrix({{1}})).item() == doctest::Approx(std::log(2.0)));
    CHECK(latent_distance(x, x).item() == 0.0);
    const Tensor a = Tensor::zeros({1, 32});
    const Tensor b = Tensor::full({1, 32}, 1.0);
    CHECK(latent_distance(a, b).item() == 32.0);
    // MSE + 0.2 L1 on a single element difference of 2
    CHECK(recon_loss(Tensor::matrix({{2}}), Tensor::matrix({{0}}), 0.2).item() == doctest::Approx(4.4));
}

TEST_CASE("report terms are nonnegative and sum to the total")
{
    const auto m = tiny_model();
    const auto cfg = test::tiny_config();
    Rng rng(1);
    const auto losses = compute_losses(m, tiny_batch(8, 3), step_options(cfg), rng);
    double sum = 0;
    for (double v : losses.report.terms) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK(std::abs(sum - losses.report.total) <= 1e-12);
    CHECK(std::abs(losses.total.item() - losses.report.total) <= 1e-9 * std::max(1.0, sum));
}

TEST_CASE("ablation flags zero their terms in the report")
{
    const auto m = tiny_model();
    Config cfg = test::tiny_config();
    cfg.train.ablation.no_latent_dist = true;
    Rng rng(1);
    auto r = compute_losses(m, tiny_batch(8, 3), step_options(cfg), rng).report;
    CHECK(r.terms[static_cast<std::size_t>(Term::latent_dist)] == 0.0);

    cfg = test::tiny_config();
    cfg.train.ablation.recon_only = true;
    r = compute_losses(m, tiny_batch(8, 3), step_options(cfg), rng).report;
    for (auto t : {Term::flow, Term::flow_mask, Term::ee_pos, Term::contact, Term::pairing}) {
        CHECK(r.terms[static_cast<std::size_t>(t)] == 0.0);
    }
    CHECK(r.terms[static_cast<std::size_t>(Term::recon)] > 0.0);
}

TEST_CASE("a zero weight gives exactly zero gradient")
{
    const auto batch = tiny_batch(6, 5);
    for (std::size_t i = 0; i < kTermCount; ++i) {
        const auto t = static_cast<Term>(i);
        CAPTURE(term_name(t));
        auto m = tiny_model();
        StepOptions o;
        o.weights = only(t, 1.0);
        o.drop = model::Modality::rgb;
        auto params = m.parameters();

        nx::zero_grads(params);
        Rng rng(4);
        auto on = compute_losses(m, batch, o, rng);
        on.total.backward();
        double norm = 0;
        for (auto* p : params) {
            for (double g : p->tensor.grad()) {
                norm += g * g;
            }
        }
        CHECK(norm > 0.0);

        o.weights = only(t, 0.0);
        nx::zero_grads(params);
        Rng rng2(4);
        auto off = compute_losses(m, batch, o, rng2);
        if (off.total.requires_grad()) {
            off.total.backward();
        }
        for (auto* p : params) {
            for (double g : p->tensor.grad()) {
                CHECK(g == 0.0);
            }
        }
        CHECK(off.report.total == 0.0);
    }
}

TEST_CASE("latent distance gradient reaches the kept and the dropped encoders")
{
    auto m = tiny_model();
    StepOptions o;
    o.weights = only(Term::latent_dist, 1.0);
    o.drop = model::Modality::rgb;
    auto params = m.parameters();
    nx::zero_grads(params);
    Rng rng(2);
    compute_losses(m, tiny_batch(6, 1), o, rng).total.backward();
    auto grad_norm = [&](const std::string& prefix) {
        double s = 0;
        for (auto* p : params) {
            if (p->name.starts_with(prefix)) {
                for (double g : p->tensor.grad()) {
                    s += g * g;
                }
            }
        }
        return s;
    };
    CHECK(grad_norm("enc.rgb") > 0.0);
    CHECK(grad_norm("enc.depth") > 0.0);
    CHECK(grad_norm("dec.") == 0.0);

    // finite-difference probe on one rgb encoder weight
    nx::Parameter* w = nullptr;
    for (auto* p : params) {
        if (p->name == "enc.rgb.0.weight") {
            w = p;
        }
    }
    REQUIRE(w != nullptr);
    const auto grad = w->tensor.grad();
    std::size_t at = 0;
    for (std::size_t i = 1; i < grad.size(); ++i) {
        if (std::abs(grad[i]) > std::abs(grad[at])) {
            at = i;
        }
    }
    const double analytic = grad[at];
    auto value = [&] {
        Rng r(2);
        nx::NoGradGuard guard;
        return compute_losses(m, tiny_batch(6, 1), o, r).total.item();
    };
    const double h = 1e-6;
    auto d = w->tensor.mutable_data();
    const double keep = d[at];
    d[at] = keep + h;
    const double up = value();
    d[at] = keep - h;
    const double down = value();
    d[at] = keep;
    const double numeric = (up - down) / (2 * h);
    CHECK(std::abs(numeric - analytic) <= 1e-4 * std::max(std::abs(numeric), 1e-8));
}

TEST_CASE("training is deterministic and decreases the loss")
{
    const auto& data = test::tiny_dataset();
    Config cfg = test::tiny_config();
    cfg.train.lr = 1e-3;
    const auto a = train(data, cfg);
    const auto b = train(data, cfg);
    CHECK(a.model.flat_parameters() == b.model.flat_parameters());
    CHECK(loss_csv(a.history, cfg.hash(), cfg.train.seed) == loss_csv(b.history, cfg.hash(), cfg.train.seed));
    CHECK(a.history.back().report.total < a.history.front().report.total);
    const auto csv = loss_csv(a.history, cfg.hash(), cfg.train.seed);
    CHECK(csv.starts_with("# config_hash=" + cfg.hash() + " seed=7\n"));
}

TEST_CASE("empty inputs are contract errors")
{
    const auto m = tiny_model();
    Rng rng(1);
    CHECK_THROWS_AS(compute_losses(m, StepBatch{}, StepOptions{}, rng), ContractError);
    sim::Dataset empty;
    CHECK_THROWS_AS(train(empty, test::tiny_config()), ContractError);
}
