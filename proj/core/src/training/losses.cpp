#include "ccm/training/losses.hpp"

#include "ccm/error.hpp"

namespace ccm::training {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op)
{
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shapes " + nx::to_string(a.shape()) + " and " +
                             nx::to_string(b.shape()) + " differ");
    }
}

double rows_of(const Tensor& a) { return static_cast<double>(a.rank() >= 1 ? a.dim(0) : 1); }

} // namespace

Tensor kl_to_standard_normal(const Tensor& mean, const Tensor& variance)
{
    require_same(mean, variance, "kl");
    const Tensor terms = nx::sub(nx::add_scalar(nx::add(nx::square(mean), variance), -1.0), nx::log(variance));
    return nx::scale(nx::sum(terms), 0.5 / rows_of(mean));
}

Tensor recon_loss(const Tensor& prediction, const Tensor& target, double l1_weight)
{
    require_same(prediction, target, "recon_loss");
    const Tensor diff = nx::sub(prediction, target);
    Tensor loss = nx::mean(nx::square(diff));
    if (l1_weight != 0.0) {
        loss = nx::add(loss, nx::scale(nx::mean(nx::abs(diff)), l1_weight));
    }
    return loss;
}

Tensor mse(const Tensor& prediction, const Tensor& target)
{
    require_same(prediction, target, "mse");
    return nx::mean(nx::square(nx::sub(prediction, target)));
}

Tensor flow_epe(const Tensor& flow, const Tensor& label, const Tensor& mask)
{
    require_same(flow, label, "flow_epe");
    if (mask.rank() != 2 || flow.rank() != 2 || mask.dim(0) != flow.dim(0) || 2 * mask.dim(1) != flow.dim(1)) {
        throw DimensionError("flow_epe: flow " + nx::to_string(flow.shape()) + " does not match mask " +
                             nx::to_string(mask.shape()));
    }
    const std::size_t b = mask.dim(0);
    const std::size_t p = mask.dim(1);
    // Per-pixel weights mask / |mask| fold the per-row mean into one sum.
    std::vector<double> weights(b * p, 0.0);
    for (std::size_t r = 0; r < b; ++r) {
        double count = 0.0;
        for (std::size_t k = 0; k < p; ++k) {
            count += mask.at(r * p + k) > 0.5 ? 1.0 : 0.0;
        }
        if (count == 0.0) {
            continue;
        }
        for (std::size_t k = 0; k < p; ++k) {
            if (mask.at(r * p + k) > 0.5) {
                weights[r * p + k] = 1.0 / count;
            }
        }
    }
    const Tensor diff = nx::sub(flow, label);
    const Tensor du = nx::slice(diff, 1, 0, p);
    const Tensor dv = nx::slice(diff, 1, p, 2 * p);
    const Tensor epe = nx::sqrt(nx::add(nx::square(du), nx::square(dv)));
    return nx::scale(nx::sum(nx::mul(epe, Tensor({b, p}, std::move(weights)))), 1.0 / static_cast<double>(b));
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& labels)
{
    require_same(logits, labels, "bce_with_logits");
    return nx::mean(nx::sub(nx::softplus(logits), nx::mul(labels, logits)));
}

Tensor latent_distance(const Tensor& a, const Tensor& b)
{
    require_same(a, b, "latent_distance");
    return nx::scale(nx::sum(nx::square(nx::sub(a, b))), 1.0 / rows_of(a));
}

} // namespace ccm::training
