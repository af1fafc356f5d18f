#pragma once

#include "ccm/config.hpp"
#include "ccm/sim/dataset.hpp"

#include <random>
#include <vector>

namespace ccm::test {

/// A few short episodes and a narrow model, for tests that need real data.
inline Config tiny_config()
{
    Config cfg;
    cfg.data.n_train = 6;
    cfg.data.n_val = 2;
    cfg.data.n_test = 2;
    cfg.model.latent_dim = 8;
    cfg.model.encoder_hidden = {16};
    cfg.model.decoder_hidden = {16};
    cfg.model.flow_hidden = {16};
    cfg.model.head_hidden = {8};
    cfg.train.epochs = 2;
    cfg.train.batch = 16;
    cfg.policy.epochs = 3;
    cfg.policy.hidden = {8, 8};
    return cfg;
}

inline const sim::Dataset& tiny_dataset()
{
    static const sim::Dataset data = sim::generate_dataset(tiny_config());
    return data;
}

inline std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi)
{
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = u(rng);
    }
    return v;
}

} // namespace ccm::test
