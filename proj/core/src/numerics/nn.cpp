#include "ccm/numerics/nn.hpp"

#include "ccm/error.hpp"

#include <cmath>

namespace ccm::nx {

Linear::Linear(std::string name, std::size_t in, std::size_t out, Activation follows, std::mt19937_64& rng)
{
    const double fan = follows == Activation::relu ? 2.0 / static_cast<double>(in)
                                                   : 2.0 / static_cast<double>(in + out);
    std::normal_distribution<double> normal(0.0, std::sqrt(fan));
    std::vector<double> w(in * out);
    for (auto& v : w) {
        v = normal(rng);
    }
    weight = Parameter(name + ".weight", Tensor({in, out}, std::move(w)));
    bias = Parameter(name + ".bias", Tensor::zeros({1, out}));
}

namespace {

Tensor activate(const Tensor& x, Activation a)
{
    switch (a) {
    case Activation::relu:
        return relu(x);
    case Activation::tanh:
        return tanh(x);
    case Activation::none:
        break;
    }
    return x;
}

} // namespace

Mlp::Mlp(std::string name, const std::vector<std::size_t>& sizes, Activation hidden, std::mt19937_64& rng,
         Activation output)
    : hidden_(hidden), output_(output)
{
    if (sizes.size() < 2) {
        throw ContractError("Mlp '" + name + "' needs at least input and output sizes");
    }
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        const bool last = i + 2 == sizes.size();
        layers_.emplace_back(name + "." + std::to_string(i), sizes[i], sizes[i + 1],
                             last ? output : hidden, rng);
    }
}

Tensor Mlp::forward(const Tensor& x) const
{
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].forward(h);
        h = activate(h, i + 1 < layers_.size() ? hidden_ : output_);
    }
    return h;
}

void Mlp::collect(std::vector<Parameter*>& out)
{
    for (auto& layer : layers_) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
}

std::vector<std::size_t> Mlp::sizes() const
{
    std::vector<std::size_t> s{layers_.front().in_features()};
    for (const auto& layer : layers_) {
        s.push_back(layer.out_features());
    }
    return s;
}

} // namespace ccm::nx
