// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "symgrade/autodiff.hpp"
#include "symgrade/gradcheck.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace symgrade {

inline constexpr double kGradCheckTolerance = 1e-5;
inline constexpr double kGradCheckStep = 1e-6;

struct ComponentCheck {
    std::string component;  // l_original, l_flipped, l_symmetry, l_consistency, l_total
    double max_rel_error = 0.0;
    bool passed() const { return max_rel_error < kGradCheckTolerance; }
};

enum class GradCheckTarget {
    /// Gradients with respect to random similarity matrices S and S^H.
    similarities,
    /// Gradients with respect to every parameter of a small random model.
    model,
};

/// Finite-difference check of each loss component, taking the worst error
/// over batch sizes N in {1, 2, 4} with K = 5 and embedding width 8.
std::vector<ComponentCheck> check_loss_gradients(std::uint64_t seed, GradCheckTarget target,
                                                 double step = kGradCheckStep,
                                                 GradFault fault = GradFault::none, double lambda = 10.0);

} // namespace symgrade
