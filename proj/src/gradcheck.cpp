// SPDX-License-Identifier: Apache-2.0
#include "symgrade/gradcheck.hpp"

#include "symgrade/errors.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace symgrade {

namespace {

double evaluate(const ScalarFn& f, std::span<Tensor* const> params, GradFault fault, bool grad) {
    Tape tape(fault);
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (Tensor* p : params) vars.push_back(grad ? tape.leaf(*p) : tape.constant(*p));
    const Var out = f(tape, vars);
    const double value = tape.value(out).item();
    if (!std::isfinite(value)) throw NumericError("finite_diff_check: objective is not finite");
    if (grad) tape.backward(out);
    return value;
}

} // namespace

GradCheckResult finite_diff_check(const ScalarFn& f, std::span<Tensor* const> params, double step,
                                  GradFault fault) {
    if (!(step > 0.0)) throw ContractError("finite_diff_check: step must be positive");
    std::vector<bool> saved_flags;
    for (Tensor* p : params) {
        saved_flags.push_back(p->requires_grad());
        p->set_requires_grad(true);
        p->zero_grad();
    }
    evaluate(f, params, fault, true);

    GradCheckResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi];
        const std::vector<double> analytic(p.grad().begin(), p.grad().end());
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double orig = p[i];
            p[i] = orig + step;
            const double up = evaluate(f, params, fault, false);
            p[i] = orig - step;
            const double down = evaluate(f, params, fault, false);
            p[i] = orig;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[i];
            const double err =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            if (err > result.max_rel_error || (pi == 0 && i == 0)) {
                result = {err, pi, i, a, numeric};
            }
        }
    }
    for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi]->set_requires_grad(saved_flags[pi]);
    return result;
}

} // namespace symgrade
