#pragma once

// Built-in oracle suites: PoE closed form, AUROC pairwise counting, finite
// difference gradient checks and the detection rule. No data files needed.

#include <string>
#include <vector>

namespace ccm::selftest {

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// Worst abs error of fuse_poe against sequential two-Gaussian products.
Check poe_oracle(int sets = 1000, unsigned seed = 1);
/// Batched tensor fusion against fuse_poe.
Check poe_tensor_agreement(unsigned seed = 2);
/// auroc() against exhaustive pairwise counting, exact equality.
Check auroc_oracle(int sets = 200, unsigned seed = 3);
/// Central finite differences of every loss term, relative error < 1e-4.
Check gradient_checks(unsigned seed = 4);
/// Youden thresholds and detection-rule examples.
Check detection_rules();

std::vector<Check> run_all();

} // namespace ccm::selftest
