#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "json.hpp"

#include "muff/flow.hpp"
#include "muff/tensor.hpp"

namespace muff {

// Normalizer for packet lengths in graph node features and LSTM inputs.
inline constexpr double kLengthScale = 1500.0;

// n signed packet lengths (dir * len), zero-padded.
struct LengthSequence {
    std::vector<int> values;
};

// First m payload bytes of each of the first n packets, each packet
// zero-padded to m, missing packets zero-filled: n * m values in 0..255.
struct PayloadSequence {
    std::vector<std::uint8_t> values;
};

// Layered packet-interaction graph. Nodes are the first min(#packets, n)
// packets in arrival order; a layer is a maximal run of same-direction
// packets. Edges chain consecutive nodes inside a layer and link the first
// nodes of adjacent layers. Node features are [dir * len / 1500, dir].
struct InteractionGraph {
    std::size_t num_nodes = 0;
    std::vector<std::array<double, 2>> node_features;
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // i < j, sorted
    std::vector<std::vector<std::size_t>> layers;

    // Dense binary symmetric [N, N] adjacency with zero diagonal.
    Tensor adjacency() const;
};

struct ViewSet {
    LengthSequence lengths;
    PayloadSequence payload;
    InteractionGraph graph;
};

LengthSequence build_length_sequence(const Flow& flow, std::size_t n);
PayloadSequence build_payload_sequence(const Flow& flow, std::size_t n, std::size_t m);
// Throws InvalidArgument for a flow without packets.
InteractionGraph build_interaction_graph(const Flow& flow, std::size_t n);
ViewSet build_views(const Flow& flow, std::size_t n, std::size_t m);

// {"length_seq": [...], "payload_seq": [...], "graph": {"edges", "layers", "x"}}
void append_views_json(const ViewSet& views, nlohmann::json& out);

}  // namespace muff
