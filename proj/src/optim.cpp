// SPDX-License-Identifier: Apache-2.0
#include "symgrade/optim.hpp"

#include "symgrade/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace symgrade {

void TrainConfig::validate() const {
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    if (!positive(base_lr)) throw ConfigError("base_lr must be positive");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
    if (!positive(temperature)) throw ConfigError("temperature must be positive");
    if (!(pct_start > 0.0 && pct_start < 1.0)) throw ConfigError("pct_start must lie in (0,1)");
    if (!positive(div_factor) || !positive(final_div_factor)) throw ConfigError("div factors must be positive");
}

OptimizerState OptimizerState::for_params(const std::vector<std::pair<std::string, Tensor*>>& params) {
    OptimizerState s;
    for (const auto& [name, t] : params) {
        s.m.emplace_back(t->size(), 0.0);
        s.v.emplace_back(t->size(), 0.0);
    }
    return s;
}

void adamw_step(const std::vector<std::pair<std::string, Tensor*>>& params, OptimizerState& state,
                double lr, double weight_decay) {
    if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw ContractError("adamw_step: lr and weight decay must be >= 0");
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("adamw_step: optimizer state has " + std::to_string(state.m.size()) +
                         " slots for " + std::to_string(params.size()) + " parameters");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        const auto& [name, t] = params[p];
        if (state.m[p].size() != t->size() || state.v[p].size() != t->size()) {
            throw ShapeError("adamw_step: state for '" + name + "' does not match its shape " + to_string(t->shape()));
        }
        const auto g = t->grad();
        if (!g.empty() && g.size() != t->size()) throw ShapeError("adamw_step: gradient shape for '" + name + "'");
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i])) {
                throw NumericError("adamw_step: non-finite gradient in parameter '" + name + "' at element " +
                                   std::to_string(i));
            }
        }
    }
    state.step += 1;
    const double t_step = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(OptimizerState::beta1, t_step);
    const double bc2 = 1.0 - std::pow(OptimizerState::beta2, t_step);
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p].second;
        const auto g = t.grad();
        auto theta = t.data();
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = g.empty() ? 0.0 : g[i];
            m[i] = OptimizerState::beta1 * m[i] + (1.0 - OptimizerState::beta1) * gi;
            v[i] = OptimizerState::beta2 * v[i] + (1.0 - OptimizerState::beta2) * gi * gi;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + OptimizerState::eps) + weight_decay * theta[i]);
        }
        if (!t.all_finite()) throw NumericError("adamw_step: parameter '" + params[p].first + "' became non-finite");
    }
}

double onecycle_lr(std::uint64_t step, std::uint64_t total_steps, const TrainConfig& cfg) {
    if (total_steps == 0) throw ContractError("onecycle_lr: total_steps must be positive");
    if (step > total_steps) throw ContractError("onecycle_lr: step beyond total_steps");
    const double max_lr = cfg.base_lr;
    const double start_lr = max_lr / cfg.div_factor;
    const double end_lr = max_lr / cfg.final_div_factor;
    const auto peak = std::clamp<std::uint64_t>(
        static_cast<std::uint64_t>(std::llround(cfg.pct_start * static_cast<double>(total_steps))), 1,
        total_steps);
    // Cosine from `from` (t=0) to `to` (t=1), exact at both ends.
    const auto anneal = [](double from, double to, double t) {
        if (t <= 0.0) return from;
        if (t >= 1.0) return to;
        return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
    };
    if (step <= peak) {
        return anneal(start_lr, max_lr, static_cast<double>(step) / static_cast<double>(peak));
    }
    return anneal(max_lr, end_lr,
                  static_cast<double>(step - peak) / static_cast<double>(total_steps - peak));
}

} // namespace symgrade
