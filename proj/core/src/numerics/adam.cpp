#include "ccm/numerics/adam.hpp"

#include "ccm/error.hpp"

#include <cmath>

namespace ccm::nx {

Parameter::Parameter(std::string name_, Tensor value)
    : name(std::move(name_)),
      tensor(value.clone(true)),
      adam_m(value.numel(), 0.0),
      adam_v(value.numel(), 0.0)
{
}

void adam_step(const std::vector<Parameter*>& params, const AdamOptions& options)
{
    // Validate every gradient before touching any parameter.
    for (Parameter* p : params) {
        if (!p->tensor.has_grad()) {
            continue;
        }
        for (double g : p->tensor.mutable_grad()) {
            if (!std::isfinite(g)) {
                throw NumericError("non-finite gradient in parameter '" + p->name + "'");
            }
        }
    }
    for (Parameter* p : params) {
        const auto t = ++p->step_count;
        const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(t));
        auto data = p->tensor.mutable_data();
        const std::size_t n = data.size();
        double* __restrict x = data.data();
        double* __restrict m = p->adam_m.data();
        double* __restrict v = p->adam_v.data();
        const double b1 = options.beta1;
        const double b2 = options.beta2;
        const double step = options.lr / bc1;
        const double inv_bc2 = 1.0 / bc2;
        const double eps = options.eps;
        if (!p->tensor.has_grad()) {
            // Zero gradient: moments decay, the step still moves by the decayed momentum.
            for (std::size_t i = 0; i < n; ++i) {
                m[i] *= b1;
                v[i] *= b2;
                x[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
            }
            continue;
        }
        const double* __restrict g = p->tensor.mutable_grad().data();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            x[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
        }
        p->tensor.zero_grad();
    }
}

void zero_grads(const std::vector<Parameter*>& params)
{
    for (Parameter* p : params) {
        p->tensor.zero_grad();
    }
}

} // namespace ccm::nx
