// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "symgrade/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace symgrade {

struct TrainConfig {
    double base_lr = 1e-5;
    double weight_decay = 1e-6;
    std::size_t batch_size = 64;
    std::size_t epochs = 20;
    double lambda = 10.0;
    double temperature = 10.0;
    std::uint64_t seed = 0;
    double pct_start = 0.3;
    double div_factor = 25.0;
    double final_div_factor = 1e4;

    void validate() const;
};

/// AdamW moment buffers, one pair per parameter tensor in a fixed order.
struct OptimizerState {
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;

    /// Zeroed moments mirroring the given parameter sizes.
    static OptimizerState for_params(const std::vector<std::pair<std::string, Tensor*>>& params);
};

/// One AdamW update with decoupled weight decay:
///   theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
/// Gradients are read from each tensor's grad buffer. A non-finite gradient
/// aborts before anything is modified, naming the parameter.
void adamw_step(const std::vector<std::pair<std::string, Tensor*>>& params, OptimizerState& state,
                double lr, double weight_decay);

/// One-cycle schedule: cosine warm-up from base_lr/div_factor to base_lr over
/// round(pct_start * total_steps) steps, then cosine decay to
/// base_lr/final_div_factor at total_steps.
double onecycle_lr(std::uint64_t step, std::uint64_t total_steps, const TrainConfig& cfg);

} // namespace symgrade
