#include "ccm/config.hpp"
#include "ccm/detector/detector.hpp"
#include "ccm/model/fusion.hpp"
#include "ccm/numerics/tensor.hpp"
#include "ccm/sim/dataset.hpp"
#include "ccm/training/trainer.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace ccm;

namespace {

// Default model sizes on a handful of episodes.
const sim::Dataset& small_data()
{
    static const sim::Dataset data = [] {
        Config cfg;
        cfg.data.n_train = 4;
        cfg.data.n_val = 1;
        cfg.data.n_test = 1;
        return sim::generate_dataset(cfg);
    }();
    return data;
}

nx::Tensor random_tensor(std::size_t rows, std::size_t cols, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    std::vector<double> v(rows * cols);
    for (auto& x : v) {
        x = n(rng);
    }
    return nx::Tensor({rows, cols}, std::move(v));
}

void BM_Matmul(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_tensor(64, n, 1);
    const auto b = random_tensor(n, 256, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(nx::matmul(a, b));
    }
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(1024)->Arg(3072);

void BM_TrainingStep(benchmark::State& state)
{
    const Config cfg;
    const auto& data = small_data();
    model::FusionModel m(cfg.model, data.stats.robot_mask);
    training::StepBatch batch;
    for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.train.batch); ++i) {
        batch.paired.push_back(&data.train.frames[(i * 7) % data.train.size()]);
    }
    for (std::size_t i = 0; i < batch.paired.size() / 2; ++i) {
        batch.negatives.push_back(sim::make_unpaired(*batch.paired[i], data.train, i));
    }
    const auto options = training::step_options(cfg);
    nx::AdamOptions adam;
    adam.lr = cfg.train.lr;
    Rng rng(1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(training::training_step(m, batch, options, adam, rng));
    }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_DetectionScores(benchmark::State& state)
{
    const Config cfg;
    const auto& data = small_data();
    const model::FusionModel m(cfg.model, data.stats.robot_mask);
    std::vector<const sim::Observation*> obs;
    for (std::size_t i = 0; i < static_cast<std::size_t>(state.range(0)); ++i) {
        obs.push_back(&data.train.frames[i % data.train.size()].obs);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(detector::recon_errors(obs, m));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DetectionScores)->Arg(1)->Arg(256)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
