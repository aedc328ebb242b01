#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tlora/adapters.hpp"
#include "tlora/diffusion.hpp"

namespace tlora {

struct GradCheckCase {
    std::string name;
    double max_rel_err = 0.0;   // worst parameter entry
    std::string worst_param;
};

// Compares analytic gradients against central finite differences
// (step 1e-5) for a small denoiser: raw layers plus one case per adapter
// kind, with mixed batch timesteps. Relative error uses
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-4); positions the
// loss provably cannot reach (masked components) compare exactly.
std::vector<GradCheckCase> run_gradient_checks(std::uint64_t seed);

// Single-configuration check, reusable from tests. lambda_reg > 0 folds the
// orthogonality penalty into the checked loss.
GradCheckCase gradient_check_denoiser(const std::optional<AdapterSpec>& adapter,
                                      double lambda_reg, std::uint64_t seed,
                                      const std::string& name);

inline constexpr double kGradCheckTolerance = 1e-6;

}  // namespace tlora
