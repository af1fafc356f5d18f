#pragma once

#include "ccm/numerics/adam.hpp"
#include "ccm/numerics/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ccm::nx {

enum class Activation { relu, tanh, none };

class Linear {
public:
    Linear() = default;
    /// He-normal weights for relu layers, Xavier-normal otherwise; zero bias.
    Linear(std::string name, std::size_t in, std::size_t out, Activation follows, std::mt19937_64& rng);

    Tensor forward(const Tensor& x) const { return linear(x, weight.tensor, bias.tensor); }
    std::size_t in_features() const { return weight.tensor.dim(0); }
    std::size_t out_features() const { return weight.tensor.dim(1); }

    Parameter weight;
    Parameter bias;
};

/// Stack of Linear layers with a shared hidden activation. The last layer is
/// followed by `output` (linear by default).
class Mlp {
public:
    Mlp() = default;
    Mlp(std::string name, const std::vector<std::size_t>& sizes, Activation hidden, std::mt19937_64& rng,
        Activation output = Activation::none);

    Tensor forward(const Tensor& x) const;
    void collect(std::vector<Parameter*>& out);
    std::size_t in_features() const { return layers_.front().in_features(); }
    std::size_t out_features() const { return layers_.back().out_features(); }
    std::vector<std::size_t> sizes() const;

private:
    std::vector<Linear> layers_;
    Activation hidden_ = Activation::relu;
    Activation output_ = Activation::none;
};

} // namespace ccm::nx
