#pragma once

#include "ccm/numerics/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ccm::nx {

/// A trainable tensor plus its Adam moment estimates.
struct Parameter {
    std::string name;
    Tensor tensor;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::int64_t step_count = 0;

    Parameter() = default;
    Parameter(std::string name, Tensor value);
};

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update on every parameter, then zeroes grads.
/// A parameter that received no gradient is updated with a zero gradient.
void adam_step(const std::vector<Parameter*>& params, const AdamOptions& options);

void zero_grads(const std::vector<Parameter*>& params);

} // namespace ccm::nx
