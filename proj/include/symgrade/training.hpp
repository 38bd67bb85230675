// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "symgrade/checkpoint.hpp"
#include "symgrade/data.hpp"
#include "symgrade/errors.hpp"
#include "symgrade/losses.hpp"
#include "symgrade/model.hpp"
#include "symgrade/optim.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace symgrade {

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;        // rate used by the epoch's last update
    double l_original = 0.0;
    double l_flipped = 0.0;
    double l_symmetry = 0.0;
    double l_consistency = 0.0;
    double l_total = 0.0;
    double val_accuracy = 0.0;
    double flip_consistency_rate = 0.0;

    friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

/// Everything needed to continue a run bit-for-bit.
struct TrainState {
    ModelParams params;
    OptimizerState optimizer;
    NormStats norm;
    std::size_t epoch = 0;  // completed epochs
    double best_val_accuracy = -1.0;
    std::size_t best_epoch = 0;
};

struct TrainHooks {
    /// After every optimizer update, with the loss of that batch.
    std::function<void(std::uint64_t step, const LossBreakdown&)> on_step;
    /// After every epoch, once the log row is final.
    std::function<void(const TrainState&, const EpochLog&)> on_epoch;
    /// When an epoch becomes the best so far by validation accuracy.
    std::function<void(const TrainState&)> on_best;
};

struct TrainResult {
    TrainState state;
    std::vector<EpochLog> log;
};

/// Raised when a step produces a non-finite loss, gradient or parameter.
/// `completed_epochs` is how far the last good state got.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, std::size_t completed_epochs)
        : NumericError(what), completed_epochs(completed_epochs) {}
    std::size_t completed_epochs;
};

/// Fresh state: seeded init and normalization stats of `train_set`.
TrainState initial_state(const TrainConfig& cfg, ModelConfig model_cfg,
                         std::vector<GradeDescription> descriptions,
                         const std::vector<ImageSample>& train_set);

/// Zeroes grads, runs the shared encoder on the batch and its mirror, and
/// backpropagates the combined objective. `batch` must already be normalized.
LossBreakdown compute_gradients(ModelParams& params, const Batch& batch, double lambda);

/// compute_gradients followed by one AdamW update at `lr`.
LossBreakdown train_step(ModelParams& params, OptimizerState& opt, const Batch& batch,
                         const TrainConfig& cfg, double lr);

std::size_t batches_per_epoch(std::size_t samples, std::size_t batch_size);

/// Runs epochs state.epoch+1 .. cfg.epochs. Identical inputs give identical
/// logs; resuming from a saved state reproduces the remainder exactly.
TrainResult train(const std::vector<ImageSample>& train_set, const std::vector<ImageSample>& val_set,
                  const TrainConfig& cfg, TrainState state, const TrainHooks& hooks = {});

Checkpoint to_checkpoint(const TrainState& state, const TrainConfig& cfg,
                         const nlohmann::json& extra = nlohmann::json::object());
/// Restores the state and, when present, the config snapshot.
TrainState from_checkpoint(const Checkpoint& ckpt, TrainConfig* cfg = nullptr);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

void write_log_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path);
std::vector<EpochLog> read_log_csv(const std::filesystem::path& path);

} // namespace symgrade
