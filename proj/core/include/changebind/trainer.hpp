#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "changebind/dataset.hpp"
#include "changebind/metrics.hpp"
#include "changebind/model.hpp"
#include "changebind/optim.hpp"

namespace changebind {

struct TrainConfig {
    double lr0 = 3e-4;
    int epochs = 200;
    AdamWConfig adamw;
    int batch_size = 4;
    std::uint64_t seed = 0;
    /// Write a checkpoint every N epochs; 0 writes only the final one.
    int checkpoint_every = 0;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    /// Pixel-mean cross-entropy averaged over the epoch's samples.
    double loss = 0.0;
    std::optional<ConfusionCounts> val;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    /// Counts on the training split with the final parameters.
    ConfusionCounts final_train;
    std::vector<std::filesystem::path> checkpoints;
};

struct TrainOptions {
    /// When set, receives `report` (one JSON object per line) and checkpoints.
    std::filesystem::path out_dir;
    const Dataset* val = nullptr;
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Sample order for one epoch, derived from (seed, epoch) only.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

/// Mini-batch AdamW training with the learning rate fixed per epoch by
/// lr_schedule. A non-finite loss writes `last_good.ckpt` (when out_dir is
/// set) and throws NumericError.
TrainReport train(ChangeBindModel& model, const Dataset& data, const TrainConfig& config,
                  const TrainOptions& options = {});

/// Micro-averaged confusion over `data`. Optionally returns each sample's
/// predicted [H, W] mask in dataset order.
ConfusionCounts evaluate(const ChangeBindModel& model, const Dataset& data, int batch_size,
                         std::vector<BinaryMask>* predictions = nullptr);

} // namespace changebind
