#include "muff/dataset.hpp"

#include <algorithm>
#include <set>

#include "muff/error.hpp"
#include "muff/views.hpp"

namespace muff {

std::vector<std::size_t> Dataset::labels() const {
    std::vector<std::size_t> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        out.push_back(s.label);
    }
    return out;
}

std::vector<std::string> collect_classes(const std::vector<Flow>& flows) {
    std::set<std::string> names;
    for (const auto& f : flows) {
        if (!f.packets.empty()) {
            names.insert(f.label);
        }
    }
    return {names.begin(), names.end()};
}

Dataset build_dataset(const std::vector<Flow>& flows, std::size_t n, std::size_t m,
                      std::vector<std::string> classes) {
    Dataset ds;
    ds.classes = classes.empty() ? collect_classes(flows) : std::move(classes);
    for (const auto& flow : flows) {
        if (flow.packets.empty()) {
            ++ds.dropped_empty;
            continue;
        }
        auto it = std::find(ds.classes.begin(), ds.classes.end(), flow.label);
        if (it == ds.classes.end()) {
            throw InvalidArgument("flow '" + flow.flow_id + "' has label '" + flow.label +
                                  "' which the model does not know");
        }
        ds.samples.push_back(prepare_sample(build_views(flow, n, m),
                                            static_cast<std::size_t>(it - ds.classes.begin())));
        ds.flow_ids.push_back(flow.flow_id);
    }
    return ds;
}

}  // namespace muff
