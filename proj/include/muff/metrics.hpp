#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"

namespace muff {

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct MetricsReport {
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::size_t total = 0;
};

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth,
                                 std::span<const std::size_t> predicted, std::size_t num_classes);

// One-vs-rest precision/recall per class, F1 as their harmonic mean, macro
// values as unweighted means. Any 0/0 rate is 0.
MetricsReport metrics_from_confusion(const ConfusionMatrix& cm);

nlohmann::json to_json(const MetricsReport& r);

}  // namespace muff
