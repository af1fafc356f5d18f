#include "ccm/selftest.hpp"

#include "ccm/detector/detector.hpp"
#include "ccm/model/fusion.hpp"
#include "ccm/numerics/nn.hpp"
#include "ccm/training/losses.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

namespace ccm::selftest {

using nx::Tensor;

namespace {

template <class F>
Check timed(std::string name, F&& body)
{
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    c.name = std::move(name);
    try {
        body(c);
    } catch (const std::exception& e) {
        c.passed = false;
        c.detail = std::string("exception: ") + e.what();
    }
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c;
}

Tensor random_tensor(std::mt19937_64& rng, nx::Shape shape, double lo, double hi, bool grad = true)
{
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(nx::numel_of(shape));
    for (auto& x : v) {
        x = u(rng);
    }
    return Tensor(std::move(shape), std::move(v), grad);
}

/// Norm-wise relative error between analytic and central-difference
/// gradients of `f` with respect to each of `inputs`.
double gradient_error(const std::function<Tensor()>& f, std::vector<Tensor>& inputs, double h = 1e-6)
{
    for (auto& x : inputs) {
        x.zero_grad();
    }
    f().backward();
    double worst = 0.0;
    for (auto& x : inputs) {
        const auto analytic = x.grad();
        double diff = 0.0;
        double norm_a = 0.0;
        double norm_n = 0.0;
        auto data = x.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double keep = data[i];
            data[i] = keep + h;
            const double up = f().item();
            data[i] = keep - h;
            const double down = f().item();
            data[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            diff += (numeric - analytic[i]) * (numeric - analytic[i]);
            norm_a += analytic[i] * analytic[i];
            norm_n += numeric * numeric;
        }
        const double scale = std::max({std::sqrt(norm_a), std::sqrt(norm_n), 1e-12});
        worst = std::max(worst, std::sqrt(diff) / scale);
    }
    return worst;
}

} // namespace

Check poe_oracle(int sets, unsigned seed)
{
    return timed("poe_oracle", [&](Check& c) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> count(1, 4);
        std::uniform_int_distribution<int> dims(1, 8);
        std::uniform_real_distribution<double> mean(-3.0, 3.0);
        std::uniform_real_distribution<double> logvar(-4.0, 2.0);
        double worst = 0.0;
        for (int s = 0; s < sets; ++s) {
            const int n = count(rng);
            const auto d = static_cast<std::size_t>(dims(rng));
            std::vector<model::GaussianExpert> experts(static_cast<std::size_t>(n));
            for (auto& e : experts) {
                for (std::size_t j = 0; j < d; ++j) {
                    e.mean.push_back(mean(rng));
                    e.variance.push_back(std::exp(logvar(rng)));
                }
            }
            const auto fused = model::fuse_poe(experts);
            for (std::size_t j = 0; j < d; ++j) {
                // Multiply densities two at a time, starting from the prior.
                double m = 0.0;
                double v = 1.0;
                for (const auto& e : experts) {
                    const double m2 = e.mean[j];
                    const double v2 = e.variance[j];
                    m = (m * v2 + m2 * v) / (v + v2);
                    v = v * v2 / (v + v2);
                }
                worst = std::max({worst, std::abs(fused.mean[j] - m), std::abs(fused.variance[j] - v)});
            }
        }
        c.passed = worst < 1e-9;
        std::ostringstream os;
        os << sets << " sets, max abs err " << worst;
        c.detail = os.str();
    });
}

Check poe_tensor_agreement(unsigned seed)
{
    return timed("poe_tensor_agreement", [&](Check& c) {
        std::mt19937_64 rng(seed);
        constexpr std::size_t rows = 5;
        constexpr std::size_t d = 6;
        model::ExpertSet experts;
        for (auto& e : experts) {
            e.mean = random_tensor(rng, {rows, d}, -2.0, 2.0, false);
            e.logvar = random_tensor(rng, {rows, d}, -3.0, 1.5, false);
        }
        double worst = 0.0;
        for (auto drop : model::kDroppable) {
            const auto subset = model::ModalitySet::all_but(drop);
            const auto batch = model::fuse(experts, subset);
            for (std::size_t r = 0; r < rows; ++r) {
                std::vector<model::GaussianExpert> list;
                for (auto m : model::kModalities) {
                    if (!subset.contains(m)) {
                        continue;
                    }
                    const auto& e = experts[static_cast<std::size_t>(m)];
                    model::GaussianExpert g;
                    for (std::size_t j = 0; j < d; ++j) {
                        g.mean.push_back(e.mean.at(r * d + j));
                        g.variance.push_back(std::exp(e.logvar.at(r * d + j)));
                    }
                    list.push_back(g);
                }
                const auto ref = model::fuse_poe(list);
                for (std::size_t j = 0; j < d; ++j) {
                    worst = std::max({worst, std::abs(batch.mean.at(r * d + j) - ref.mean[j]),
                                      std::abs(batch.variance.at(r * d + j) - ref.variance[j])});
                }
            }
        }
        c.passed = worst < 1e-12;
        std::ostringstream os;
        os << "max abs err " << worst;
        c.detail = os.str();
    });
}

Check auroc_oracle(int sets, unsigned seed)
{
    return timed("auroc_oracle", [&](Check& c) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> size(1, 25);
        std::uniform_int_distribution<int> grid(0, 20);
        int mismatches = 0;
        for (int s = 0; s < sets; ++s) {
            std::vector<double> clean(static_cast<std::size_t>(size(rng)));
            std::vector<double> bad(static_cast<std::size_t>(size(rng)));
            // Coarse grid so that ties are common.
            for (auto& v : clean) {
                v = grid(rng) * 0.05;
            }
            for (auto& v : bad) {
                v = grid(rng) * 0.05 + 0.1;
            }
            std::uint64_t twice = 0;
            for (double k : bad) {
                for (double n : clean) {
                    twice += k > n ? 2 : (k == n ? 1 : 0);
                }
            }
            const double pairwise =
                static_cast<double>(twice) / (2.0 * static_cast<double>(clean.size() * bad.size()));
            if (detector::auroc(clean, bad) != pairwise) {
                ++mismatches;
            }
        }
        c.passed = mismatches == 0;
        c.detail = std::to_string(sets) + " sets, " + std::to_string(mismatches) + " mismatches";
    });
}

Check gradient_checks(unsigned seed)
{
    return timed("gradient_checks", [&](Check& c) {
        std::mt19937_64 rng(seed);
        std::ostringstream os;
        bool ok = true;
        auto record = [&](const char* name, double err) {
            os << name << '=' << err << ' ';
            ok = ok && err < 1e-4;
        };

        // A tiny encoder feeding each loss, so gradients also cross linear/relu/tanh.
        nx::Mlp net("tiny", {4, 5, 6}, nx::Activation::tanh, rng);
        std::vector<nx::Parameter*> params;
        net.collect(params);
        const Tensor x = random_tensor(rng, {3, 4}, -1.0, 1.0, false);
        auto inputs_with = [&](std::vector<Tensor> extra) {
            for (auto* p : params) {
                extra.push_back(p->tensor);
            }
            return extra;
        };

        {
            const Tensor target = random_tensor(rng, {3, 6}, -2.0, 2.0, false);
            auto in = inputs_with({});
            record("recon", gradient_error([&] { return training::recon_loss(net.forward(x), target, 0.2); }, in));
            record("mse", gradient_error([&] { return training::mse(net.forward(x), target); }, in));
        }
        {
            Tensor mean = random_tensor(rng, {3, 4}, -1.0, 1.0);
            Tensor logvar = random_tensor(rng, {3, 4}, -1.0, 1.0);
            std::vector<Tensor> in{mean, logvar};
            record("kl", gradient_error([&] { return training::kl_to_standard_normal(mean, nx::exp(logvar)); }, in));
        }
        {
            const Tensor label = random_tensor(rng, {3, 6}, -1.0, 1.0, false);
            const Tensor mask = Tensor::matrix({{1, 0, 1}, {1, 1, 1}, {0, 1, 0}});
            auto in = inputs_with({});
            record("epe", gradient_error([&] { return training::flow_epe(net.forward(x), label, mask); }, in));
        }
        {
            const Tensor labels = Tensor::matrix({{1, 0, 1, 0, 0, 1}, {0, 0, 1, 1, 0, 1}, {1, 1, 1, 0, 0, 0}});
            auto in = inputs_with({});
            record("bce", gradient_error([&] { return training::bce_with_logits(net.forward(x), labels); }, in));
        }
        {
            Tensor a = random_tensor(rng, {3, 6}, -1.0, 1.0);
            auto in = inputs_with({a});
            record("latent_dist", gradient_error([&] { return training::latent_distance(a, net.forward(x)); }, in));
        }
        {
            // PoE fusion followed by KL, through the precision-weighted product.
            Tensor m0 = random_tensor(rng, {2, 3}, -1.0, 1.0);
            Tensor m1 = random_tensor(rng, {2, 3}, -1.0, 1.0);
            Tensor l0 = random_tensor(rng, {2, 3}, -1.0, 1.0);
            Tensor l1 = random_tensor(rng, {2, 3}, -1.0, 1.0);
            std::vector<Tensor> in{m0, m1, l0, l1};
            auto f = [&] {
                model::ExpertSet e;
                e[0] = {m0, l0};
                e[1] = {m1, l1};
                e[2] = {m0, l1};
                e[3] = {m1, l0};
                const auto fused = model::fuse(e, model::ModalitySet::all_but(model::Modality::force));
                return training::kl_to_standard_normal(fused.mean, fused.variance);
            };
            record("poe_kl", gradient_error(f, in));
        }
        c.passed = ok;
        c.detail = os.str();
    });
}

Check detection_rules()
{
    return timed("detection_rules", [&](Check& c) {
        std::vector<std::string> failures;
        auto expect = [&](bool cond, const char* what) {
            if (!cond) {
                failures.emplace_back(what);
            }
        };
        const std::vector<double> clean{0.1, 0.4, 0.35};
        const std::vector<double> bad{0.3, 0.8};
        expect(std::abs(detector::auroc(clean, bad) - 4.0 / 6.0) < 1e-15, "auroc example");
        const auto cut = detector::youden_threshold(clean, bad);
        expect(cut.threshold > 0.4 && cut.threshold < 0.8 && std::abs(cut.youden_j - 0.5) < 1e-15, "youden example");
        const std::vector<double> low{0.1, 0.2};
        const std::vector<double> high{0.8, 0.9};
        const auto sep = detector::youden_threshold(low, high);
        expect(sep.threshold == 0.5 && sep.youden_j == 1.0, "youden separated");

        detector::ThresholdTable t;
        t.calibrated = true;
        t.rgb = 1.0;
        t.depth = 1.0;
        t.force = {0.5, 0.5, 0.5};
        detector::Scores s;
        s.force = {0.9, 0.2, 0.8};
        auto r = detector::detect(s, t);
        expect(r.force_flag && r.rejected == model::Modality::force, "2 of 3 force dims");
        s.force = {0.9, 0.2, 0.2};
        expect(!detector::detect(s, t).force_flag, "1 of 3 force dims");

        t.rgb_stats = {0.0, 1.0};
        t.depth_stats = {0.0, 1.0};
        s = {};
        s.rgb = 3.2;
        s.depth = 5.0;
        r = detector::detect(s, t);
        expect(r.rejected == model::Modality::depth, "z-score tie-break");
        s = {};
        expect(!detector::detect(s, t).rejected, "nothing flagged");

        c.passed = failures.empty();
        for (const auto& f : failures) {
            c.detail += f + "; ";
        }
        if (c.passed) {
            c.detail = "all examples hold";
        }
    });
}

std::vector<Check> run_all()
{
    return {poe_oracle(), poe_tensor_agreement(), auroc_oracle(), gradient_checks(), detection_rules()};
}

} // namespace ccm::selftest
