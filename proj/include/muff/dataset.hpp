#pragma once

#include <string>
#include <vector>

#include "muff/flow.hpp"
#include "muff/model.hpp"

namespace muff {

// Model-ready samples for a flow collection at one (n, m).
struct Dataset {
    std::vector<std::string> classes;   // label index -> name
    std::vector<std::string> flow_ids;  // parallel to samples
    std::vector<Sample> samples;
    std::size_t dropped_empty = 0;

    std::vector<std::size_t> labels() const;
};

// Sorted distinct labels of the nonempty flows.
std::vector<std::string> collect_classes(const std::vector<Flow>& flows);

// Flows without packets are dropped (they have no interaction graph). With
// `classes` empty the class list is collect_classes(flows); otherwise a flow
// whose label is not listed is an InvalidArgument.
Dataset build_dataset(const std::vector<Flow>& flows, std::size_t n, std::size_t m,
                      std::vector<std::string> classes = {});

}  // namespace muff
