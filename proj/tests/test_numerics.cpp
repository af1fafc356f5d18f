#include "ccm/error.hpp"
#include "ccm/numerics/adam.hpp"
#include "ccm/numerics/nn.hpp"
#include "ccm/numerics/tensor.hpp"

#include "doctest.h"
#include "support.hpp"

#include <cmath>
#include <functional>
#include <limits>

using namespace ccm;
using nx::Tensor;

namespace {

/// Norm-wise relative error of analytic vs central-difference gradients.
double fd_error(const std::function<Tensor()>& f, Tensor x, double h = 1e-5)
{
    x.zero_grad();
    f().backward();
    const auto g = x.grad();
    double diff = 0.0;
    double norm = 0.0;
    auto d = x.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double keep = d[i];
        d[i] = keep + h;
        const double up = f().item();
        d[i] = keep - h;
        const double down = f().item();
        d[i] = keep;
        const double num = (up - down) / (2 * h);
        diff += (num - g[i]) * (num - g[i]);
        norm += std::max(num * num, g[i] * g[i]);
    }
    return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
}

} // namespace

TEST_CASE("matmul and elementwise fixed points")
{
    const Tensor r = nx::matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{1}, {1}}));
    CHECK(r.shape() == nx::Shape{2, 1});
    CHECK(r.at(0) == 3.0);
    CHECK(r.at(1) == 7.0);
    CHECK(nx::tanh(Tensor::scalar(0.0)).item() == 0.0);
    CHECK(nx::sigmoid(Tensor::scalar(0.0)).item() == 0.5);
    CHECK(nx::relu(Tensor::scalar(-3.5)).item() == 0.0);
}

TEST_CASE("backward on hand-checkable graphs")
{
    Tensor w({2}, {1.0, 2.0}, true);
    nx::sum(nx::square(w)).backward();
    CHECK(w.grad() == std::vector<double>{2.0, 4.0});

    Tensor x = Tensor::scalar(0.0, true);
    nx::sigmoid(x).backward();
    CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("shape mismatches raise DimensionError")
{
    CHECK_THROWS_AS(nx::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
    CHECK_THROWS_AS(nx::add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
}

TEST_CASE("random three-layer network passes finite differences")
{
    std::mt19937_64 rng(5);
    nx::Mlp net("net", {5, 7, 6, 3}, nx::Activation::tanh, rng);
    std::vector<nx::Parameter*> params;
    net.collect(params);
    const Tensor x({4, 5}, test::uniform(rng, 20, -1, 1));
    auto f = [&] { return nx::mean(nx::square(net.forward(x))); };
    for (auto* p : params) {
        CHECK(fd_error(f, p->tensor) < 1e-4);
    }
}

TEST_CASE("every differentiable op passes finite differences on random probes")
{
    std::mt19937_64 rng(9);
    const std::vector<std::pair<const char*, std::function<Tensor(const Tensor&)>>> ops{
        {"exp", [](const Tensor& a) { return nx::exp(a); }},
        {"log", [](const Tensor& a) { return nx::log(nx::add_scalar(nx::square(a), 0.5)); }},
        {"tanh", [](const Tensor& a) { return nx::tanh(a); }},
        {"sigmoid", [](const Tensor& a) { return nx::sigmoid(a); }},
        {"softplus", [](const Tensor& a) { return nx::softplus(a); }},
        {"sqrt", [](const Tensor& a) { return nx::sqrt(nx::add_scalar(nx::square(a), 0.1)); }},
        {"div", [](const Tensor& a) { return nx::div(a, nx::add_scalar(nx::square(a), 1.0)); }},
        {"mul", [](const Tensor& a) { return nx::mul(a, a); }},
        {"concat", [](const Tensor& a) { return nx::concat({a, nx::scale(a, 2.0)}, 1); }},
        {"slice", [](const Tensor& a) { return nx::slice(a, 1, 1, 3); }},
        {"sum_rows", [](const Tensor& a) { return nx::sum_rows(a); }},
        {"mean_rows", [](const Tensor& a) { return nx::mean_rows(a); }},
        {"reshape", [](const Tensor& a) { return nx::reshape(a, {4, 3}); }},
    };
    for (int probe = 0; probe < 100; ++probe) {
        const auto& [name, op] = ops[static_cast<std::size_t>(probe) % ops.size()];
        Tensor x({3, 4}, test::uniform(rng, 12, -1.5, 1.5), true);
        auto f = [&] { return nx::sum(nx::square(op(x))); };
        CAPTURE(name);
        CHECK(fd_error(f, x) < 1e-4);
    }
}

TEST_CASE("forward and backward are bit-identical across runs")
{
    auto run = [] {
        std::mt19937_64 rng(3);
        nx::Mlp net("net", {6, 8, 2}, nx::Activation::relu, rng);
        std::vector<nx::Parameter*> params;
        net.collect(params);
        const Tensor x({5, 6}, test::uniform(rng, 30, -1, 1));
        const Tensor loss = nx::mean(nx::square(net.forward(x)));
        loss.backward();
        std::vector<double> out{loss.item()};
        for (auto* p : params) {
            const auto g = p->tensor.grad();
            out.insert(out.end(), g.begin(), g.end());
        }
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("extreme inputs raise NumericError or stay finite")
{
    const double big = 1e308;
    for (double v : {big, -big, 1e-320, 0.0, -0.0}) {
        const Tensor x = Tensor::scalar(v);
        for (const auto& op : std::vector<std::function<Tensor(const Tensor&)>>{
                 [](const Tensor& a) { return nx::exp(a); }, [](const Tensor& a) { return nx::log(a); },
                 [](const Tensor& a) { return nx::square(a); }, [](const Tensor& a) { return nx::softplus(a); },
                 [](const Tensor& a) { return nx::sigmoid(a); }, [](const Tensor& a) { return nx::tanh(a); },
                 [](const Tensor& a) { return nx::div(Tensor::scalar(1.0), a); }}) {
            try {
                const double y = op(x).item();
                CHECK(std::isfinite(y));
            } catch (const NumericError&) {
            }
        }
    }
    CHECK_THROWS_AS(Tensor::scalar(std::numeric_limits<double>::quiet_NaN()) * Tensor::scalar(1.0), NumericError);
}

TEST_CASE("adam first step, zero grads and determinism")
{
    nx::Parameter p("p", Tensor::scalar(1.0));
    p.tensor.mutable_grad()[0] = 1.0;
    nx::adam_step({&p}, {0.1, 0.9, 0.999, 1e-8});
    CHECK(p.tensor.item() == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(p.step_count == 1);

    nx::Parameter q("q", Tensor::scalar(2.0));
    nx::adam_step({&q}, {0.1, 0.9, 0.999, 1e-8});
    CHECK(q.tensor.item() == 2.0);
    CHECK(q.step_count == 1);

    nx::Parameter a("a", Tensor::matrix({{0.3, -0.7}}));
    nx::Parameter b("b", Tensor::matrix({{0.3, -0.7}}));
    for (auto* x : {&a, &b}) {
        x->tensor.mutable_grad()[0] = 0.5;
        x->tensor.mutable_grad()[1] = -2.0;
    }
    nx::adam_step({&a, &b}, {});
    CHECK(std::vector<double>(a.tensor.data().begin(), a.tensor.data().end()) ==
          std::vector<double>(b.tensor.data().begin(), b.tensor.data().end()));
}
