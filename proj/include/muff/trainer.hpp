#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "muff/metrics.hpp"
#include "muff/model.hpp"
#include "muff/optim.hpp"

namespace muff {

struct TrainOptions {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    AdamOptions adam;
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;  // mean over batches
    double val_accuracy = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;  // 0 when no epoch ran
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Mini-batch Adam on cross-entropy. Batches are reshuffled every epoch from a
// stream seeded with options.seed, which also drives dropout. The returned
// params are those after the epoch with the best validation accuracy (earliest
// on ties; the last epoch when val is empty). Throws NumericalError naming
// the first non-finite tensor when the loss goes NaN/Inf.
TrainResult train(const ModelConfig& cfg, const ModelParams& init, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const TrainOptions& options,
                  const EpochCallback& on_epoch = {});

std::vector<std::size_t> predict(const ModelConfig& cfg, ModelParams& params,
                                 std::span<const Sample> samples, std::size_t batch_size = 64);

MetricsReport evaluate(const ModelConfig& cfg, ModelParams& params, std::span<const Sample> samples,
                       std::size_t batch_size = 64);

// Copies of the selected samples.
std::vector<Sample> select(std::span<const Sample> samples, std::span<const std::size_t> indices);

}  // namespace muff
