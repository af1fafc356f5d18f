#pragma once

#include "ccm/numerics/tensor.hpp"

namespace ccm::training {

using nx::Tensor;

/// KL(N(mean, variance) || N(0, I)) summed over latent dims, averaged over rows.
Tensor kl_to_standard_normal(const Tensor& mean, const Tensor& variance);

/// mean((p - t)^2) + l1_weight * mean(|p - t|)
Tensor recon_loss(const Tensor& prediction, const Tensor& target, double l1_weight = 0.2);

Tensor mse(const Tensor& prediction, const Tensor& target);

/// Mean end-point error over masked pixels per row, averaged over rows.
/// `flow` and `label` are [B, 2P] (u plane then v plane), `mask` is [B, P].
/// Rows with an empty mask contribute 0.
Tensor flow_epe(const Tensor& flow, const Tensor& label, const Tensor& mask);

/// Mean of softplus(x) - y * x; labels in {0, 1}.
Tensor bce_with_logits(const Tensor& logits, const Tensor& labels);

/// Squared L2 distance between rows of a and b, averaged over rows.
Tensor latent_distance(const Tensor& a, const Tensor& b);

} // namespace ccm::training
