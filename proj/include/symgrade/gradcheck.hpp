// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "symgrade/autodiff.hpp"

#include <functional>
#include <span>
#include <string>

namespace symgrade {

/// Builds a scalar on `tape` from one Var per parameter (same order as the
/// parameter list handed to finite_diff_check).
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares reverse-mode gradients of `f` against central differences.
///
/// Error per entry is |analytic - numeric| / max(1, |analytic|, |numeric|).
/// Parameter values are restored afterwards; their grad buffers are left
/// holding the analytic gradient.
GradCheckResult finite_diff_check(const ScalarFn& f, std::span<Tensor* const> params, double step,
                                  GradFault fault = GradFault::none);

} // namespace symgrade
