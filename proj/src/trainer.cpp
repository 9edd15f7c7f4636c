#include "muff/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "muff/error.hpp"

namespace muff {

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

[[noreturn]] void report_nan(std::size_t epoch, std::size_t batch, const ForwardResult& fwd,
                             const ModelParams& params) {
    std::string where = "training diverged at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batch) + ": ";
    for (const auto& [name, t] : params.tensors) {
        if (!all_finite(t.data())) {
            throw NumericalError(where + "parameter '" + name + "' is not finite");
        }
    }
    for (const auto& [name, t] : fwd.stages) {
        if (!all_finite(t.data())) {
            throw NumericalError(where + "first non-finite tensor is '" + name + "'");
        }
    }
    throw NumericalError(where + "loss is not finite");
}

std::vector<const Sample*> pointers(std::span<const Sample> samples,
                                    std::span<const std::size_t> order, std::size_t begin,
                                    std::size_t end) {
    std::vector<const Sample*> out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        out.push_back(&samples[order[i]]);
    }
    return out;
}

}  // namespace

TrainResult train(const ModelConfig& cfg, const ModelParams& init, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const TrainOptions& options,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (train_set.empty()) {
        throw InvalidArgument("train: empty training set");
    }
    if (options.batch_size == 0) {
        throw InvalidArgument("train: batch_size must be >= 1");
    }
    TrainResult result;
    result.params = init.clone();
    if (options.epochs == 0) {
        return result;
    }

    ModelParams params = init.clone();
    std::vector<Tensor> trainable = params.trainable();
    AdamState adam;
    Rng rng(options.seed);
    std::vector<std::size_t> order(train_set.size());
    double best_acc = -1.0;

    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            auto ptrs = pointers(train_set, order, start, end);
            Batch batch = make_batch(ptrs, cfg);
            ForwardResult fwd = variant_forward(cfg, batch, params, Mode::Train, rng);
            Tensor loss = cross_entropy(fwd.probs, batch.labels);
            if (!std::isfinite(loss.item())) {
                report_nan(epoch, batches + 1, fwd, params);
            }
            for (auto& p : trainable) {
                p.zero_grad();
            }
            loss.backward();
            adam_step(trainable, adam, options.adam);
            loss_sum += loss.item();
            ++batches;
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(batches);
        if (!val_set.empty()) {
            stats.val_accuracy = evaluate(cfg, params, val_set, options.batch_size).accuracy;
        }
        result.history.push_back(stats);
        if (on_epoch) {
            on_epoch(stats);
        }
        const bool better = val_set.empty() || stats.val_accuracy > best_acc;
        if (better) {
            best_acc = stats.val_accuracy;
            result.best_epoch = epoch;
            result.params = params.clone();
        }
    }
    return result;
}

std::vector<std::size_t> predict(const ModelConfig& cfg, ModelParams& params,
                                 std::span<const Sample> samples, std::size_t batch_size) {
    if (batch_size == 0) {
        throw InvalidArgument("predict: batch_size must be >= 1");
    }
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> out;
    out.reserve(samples.size());
    Rng unused(0);
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const std::size_t end = std::min(samples.size(), start + batch_size);
        auto ptrs = pointers(samples, order, start, end);
        Batch batch = make_batch(ptrs, cfg);
        Tensor probs = variant_forward(cfg, batch, params, Mode::Eval, unused).probs;
        auto p = probs.data();
        const std::size_t k = probs.dim(1);
        for (std::size_t b = 0; b < batch.size; ++b) {
            auto row = p.subspan(b * k, k);
            out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
        }
    }
    return out;
}

MetricsReport evaluate(const ModelConfig& cfg, ModelParams& params, std::span<const Sample> samples,
                       std::size_t batch_size) {
    if (samples.empty()) {
        throw InvalidArgument("evaluate: empty test set");
    }
    auto predicted = predict(cfg, params, samples, batch_size);
    std::vector<std::size_t> truth;
    truth.reserve(samples.size());
    for (const auto& s : samples) {
        truth.push_back(s.label);
    }
    return metrics_from_confusion(confusion_matrix(truth, predicted, cfg.num_classes));
}

std::vector<Sample> select(std::span<const Sample> samples, std::span<const std::size_t> indices) {
    std::vector<Sample> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        out.push_back(samples[i]);
    }
    return out;
}

}  // namespace muff
