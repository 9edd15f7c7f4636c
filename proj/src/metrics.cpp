#include "muff/metrics.hpp"

#include "muff/error.hpp"

namespace muff {

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth,
                                 std::span<const std::size_t> predicted, std::size_t num_classes) {
    if (truth.size() != predicted.size()) {
        throw DimensionError("confusion_matrix: " + std::to_string(truth.size()) + " labels vs " +
                             std::to_string(predicted.size()) + " predictions");
    }
    ConfusionMatrix cm(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= num_classes || predicted[i] >= num_classes) {
            throw InvalidArgument("confusion_matrix: class index out of range");
        }
        ++cm[truth[i]][predicted[i]];
    }
    return cm;
}

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm) {
    const std::size_t k = cm.size();
    for (const auto& row : cm) {
        if (row.size() != k) {
            throw DimensionError("confusion matrix must be square");
        }
    }
    MetricsReport r;
    r.confusion = cm;
    std::size_t correct = 0;
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t predicted = 0;
        std::size_t actual = 0;
        for (std::size_t o = 0; o < k; ++o) {
            predicted += cm[o][c];
            actual += cm[c][o];
            r.total += cm[c][o];
        }
        correct += cm[c][c];
        ClassMetrics m;
        m.support = actual;
        m.precision = ratio(cm[c][c], predicted);
        m.recall = ratio(cm[c][c], actual);
        const double pr = m.precision + m.recall;
        m.f1 = pr == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / pr;
        r.per_class.push_back(m);
    }
    r.accuracy = ratio(correct, r.total);
    if (k > 0) {
        for (const auto& m : r.per_class) {
            r.macro_precision += m.precision;
            r.macro_recall += m.recall;
            r.macro_f1 += m.f1;
        }
        r.macro_precision /= static_cast<double>(k);
        r.macro_recall /= static_cast<double>(k);
        r.macro_f1 /= static_cast<double>(k);
    }
    return r;
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& m : r.per_class) {
        per_class.push_back(
            {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}});
    }
    return {{"accuracy", r.accuracy},
            {"macro_precision", r.macro_precision},
            {"macro_recall", r.macro_recall},
            {"macro_f1", r.macro_f1},
            {"per_class", std::move(per_class)},
            {"confusion", r.confusion},
            {"total", r.total}};
}

}  // namespace muff
