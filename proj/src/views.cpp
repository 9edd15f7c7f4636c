#include "muff/views.hpp"

#include <algorithm>

#include "muff/error.hpp"

namespace muff {

namespace {

void require_positive(const char* what, std::size_t v) {
    if (v == 0) {
        throw InvalidArgument(std::string(what) + " must be >= 1");
    }
}

}  // namespace

Tensor InteractionGraph::adjacency() const {
    std::vector<double> a(num_nodes * num_nodes, 0.0);
    for (auto [i, j] : edges) {
        a[i * num_nodes + j] = 1.0;
        a[j * num_nodes + i] = 1.0;
    }
    return Tensor::from({num_nodes, num_nodes}, std::move(a));
}

LengthSequence build_length_sequence(const Flow& flow, std::size_t n) {
    require_positive("n", n);
    LengthSequence seq;
    seq.values.assign(n, 0);
    const std::size_t count = std::min(n, flow.packets.size());
    for (std::size_t i = 0; i < count; ++i) {
        const auto& p = flow.packets[i];
        seq.values[i] = sign(p.dir) * static_cast<int>(p.len);
    }
    return seq;
}

PayloadSequence build_payload_sequence(const Flow& flow, std::size_t n, std::size_t m) {
    require_positive("n", n);
    require_positive("m", m);
    PayloadSequence seq;
    seq.values.assign(n * m, 0);
    const std::size_t count = std::min(n, flow.packets.size());
    for (std::size_t i = 0; i < count; ++i) {
        const auto& payload = flow.packets[i].payload;
        std::copy_n(payload.begin(), std::min(m, payload.size()), seq.values.begin() + i * m);
    }
    return seq;
}

InteractionGraph build_interaction_graph(const Flow& flow, std::size_t n) {
    require_positive("n", n);
    if (flow.packets.empty()) {
        throw InvalidArgument("build_interaction_graph: flow '" + flow.flow_id +
                              "' has no packets (empty graph)");
    }
    InteractionGraph g;
    g.num_nodes = std::min(n, flow.packets.size());
    g.node_features.reserve(g.num_nodes);
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
        const auto& p = flow.packets[i];
        const double d = sign(p.dir);
        g.node_features.push_back({d * static_cast<double>(p.len) / kLengthScale, d});
        if (i == 0 || p.dir != flow.packets[i - 1].dir) {
            g.layers.emplace_back();
        }
        g.layers.back().push_back(i);
    }
    for (const auto& layer : g.layers) {
        for (std::size_t k = 1; k < layer.size(); ++k) {
            g.edges.emplace_back(layer[k - 1], layer[k]);
        }
    }
    for (std::size_t l = 1; l < g.layers.size(); ++l) {
        g.edges.emplace_back(g.layers[l - 1].front(), g.layers[l].front());
    }
    std::sort(g.edges.begin(), g.edges.end());
    return g;
}

ViewSet build_views(const Flow& flow, std::size_t n, std::size_t m) {
    return {build_length_sequence(flow, n), build_payload_sequence(flow, n, m),
            build_interaction_graph(flow, n)};
}

void append_views_json(const ViewSet& views, nlohmann::json& out) {
    out["length_seq"] = views.lengths.values;
    out["payload_seq"] = views.payload.values;
    nlohmann::json edges = nlohmann::json::array();
    for (auto [i, j] : views.graph.edges) {
        edges.push_back({i, j});
    }
    nlohmann::json x = nlohmann::json::array();
    for (const auto& f : views.graph.node_features) {
        x.push_back({f[0], f[1]});
    }
    out["graph"] = {{"edges", std::move(edges)}, {"layers", views.graph.layers}, {"x", std::move(x)}};
}

}  // namespace muff
