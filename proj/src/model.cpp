#include "muff/model.hpp"

#include <cmath>

#include "muff/error.hpp"

namespace muff {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 7> kVariantNames{{
    {Variant::MuFF, "MuFF"},
    {Variant::CNN, "CNN"},
    {Variant::LSTM, "LSTM"},
    {Variant::GCN, "GCN"},
    {Variant::CNN_GCN, "CNN+GCN"},
    {Variant::LSTM_GCN, "LSTM+GCN"},
    {Variant::CNN_LSTM, "CNN+LSTM"},
}};

enum class Init { Weight, Zero, One };

struct ParamSpec {
    std::string name;
    Shape shape;
    std::size_t fan_in = 1;
    Init init = Init::Weight;
};

void add_linear(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t in,
                std::size_t out) {
    specs.push_back({prefix + ".weight", {in, out}, in, Init::Weight});
    specs.push_back({prefix + ".bias", {out}, in, Init::Zero});
}

// Creation order fixes the random stream, so it must never depend on map order.
std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
    std::vector<ParamSpec> specs;
    const std::size_t h = cfg.hidden;
    const std::size_t k = cfg.conv_kernel;
    const auto [c1, c2] = cfg.cnn_channels;
    const std::size_t att = cfg.attn_hidden;
    if (uses_cnn(cfg.variant)) {
        specs.push_back({"cnn.conv1.weight", {c1, 1, k}, k, Init::Weight});
        specs.push_back({"cnn.conv1.bias", {c1}, k, Init::Zero});
        specs.push_back({"cnn.bn1.gamma", {c1}, 1, Init::One});
        specs.push_back({"cnn.bn1.beta", {c1}, 1, Init::Zero});
        specs.push_back({"cnn.conv2.weight", {c2, c1, k}, c1 * k, Init::Weight});
        specs.push_back({"cnn.conv2.bias", {c2}, c1 * k, Init::Zero});
        specs.push_back({"cnn.bn2.gamma", {c2}, 1, Init::One});
        specs.push_back({"cnn.bn2.beta", {c2}, 1, Init::Zero});
        specs.push_back({"cnn.attn.w1", {c2, att}, c2, Init::Weight});
        specs.push_back({"cnn.attn.w2", {att, 1}, att, Init::Weight});
        add_linear(specs, "cnn.out", c2, h);
    }
    if (uses_lstm(cfg.variant)) {
        for (const char* gate : {"i", "o", "f", "c"}) {
            specs.push_back({std::string("lstm.w_") + gate, {h + 1, h}, h + 1, Init::Weight});
        }
        for (const char* gate : {"i", "o", "f", "c"}) {
            specs.push_back({std::string("lstm.b_") + gate, {h}, h + 1, Init::Zero});
        }
        specs.push_back({"lstm.attn.w1", {h, att}, h, Init::Weight});
        specs.push_back({"lstm.attn.w2", {att, 1}, att, Init::Weight});
    }
    if (uses_gcn(cfg.variant)) {
        for (std::size_t l = 0; l < cfg.gcn_layers; ++l) {
            const std::size_t in = l == 0 ? 2 : h;
            specs.push_back({"gcn.w" + std::to_string(l), {in, h}, in, Init::Weight});
        }
    }
    switch (cfg.variant) {
        case Variant::MuFF:
        case Variant::CNN_LSTM:
            add_linear(specs, "fuse.linear1", 2 * h, h);
            add_linear(specs, "fuse.linear2", h, h);
            break;
        case Variant::CNN_GCN:
        case Variant::LSTM_GCN:
            add_linear(specs, "fuse.single", h, h);
            break;
        default:
            break;
    }
    add_linear(specs, "classifier", h, cfg.num_classes);
    return specs;
}

void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw InvalidArgument("alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
}

}  // namespace

std::string_view variant_name(Variant v) {
    for (const auto& [variant, name] : kVariantNames) {
        if (variant == v) {
            return name;
        }
    }
    return "?";
}

std::optional<Variant> parse_variant(std::string_view name) {
    for (const auto& [variant, vname] : kVariantNames) {
        if (vname == name) {
            return variant;
        }
    }
    return std::nullopt;
}

const std::array<Variant, 7>& all_variants() {
    static const std::array<Variant, 7> variants{Variant::MuFF,    Variant::CNN,      Variant::LSTM,
                                                 Variant::GCN,     Variant::CNN_GCN,  Variant::LSTM_GCN,
                                                 Variant::CNN_LSTM};
    return variants;
}

bool uses_cnn(Variant v) {
    return v == Variant::MuFF || v == Variant::CNN || v == Variant::CNN_GCN || v == Variant::CNN_LSTM;
}

bool uses_lstm(Variant v) {
    return v == Variant::MuFF || v == Variant::LSTM || v == Variant::LSTM_GCN ||
           v == Variant::CNN_LSTM;
}

bool uses_gcn(Variant v) {
    return v == Variant::MuFF || v == Variant::GCN || v == Variant::CNN_GCN ||
           v == Variant::LSTM_GCN;
}

std::vector<std::string> ModelConfig::problems() const {
    std::vector<std::string> out;
    if (n == 0) out.push_back("model.n must be >= 1");
    if (m == 0) out.push_back("model.m must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) out.push_back("model.alpha must lie in [0, 1]");
    if (hidden == 0) out.push_back("model.hidden must be >= 1");
    if (gcn_layers == 0) out.push_back("model.gcn_layers must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) out.push_back("model.dropout must lie in [0, 1)");
    if (cnn_channels[0] == 0 || cnn_channels[1] == 0) {
        out.push_back("model.cnn_channels must be positive");
    }
    if (attn_hidden == 0) out.push_back("model.attn_hidden must be >= 1");
    if (num_classes < 2) out.push_back("model.num_classes must be >= 2");
    if (conv_stride == 0 || pool_stride == 0) out.push_back("strides must be >= 1");
    if (pool_padding >= pool_kernel) out.push_back("pool padding must be smaller than the pool window");
    if (n > 0 && m > 0 && conv_stride > 0 && pool_stride > 0) {
        try {
            cnn_positions();
        } catch (const Error& e) {
            out.push_back("CNN geometry invalid for n*m = " + std::to_string(n * m) + ": " + e.what());
        }
    }
    return out;
}

void ModelConfig::validate() const {
    auto p = problems();
    if (!p.empty()) {
        throw ConfigError(std::move(p));
    }
}

std::array<std::size_t, 3> ModelConfig::cnn_positions() const {
    const std::size_t l0 = n * m;
    const std::size_t c1 = conv1d_output_length(l0, conv_kernel, conv_stride, conv_padding);
    const std::size_t l1 = conv1d_output_length(c1, pool_kernel, pool_stride, pool_padding);
    const std::size_t c2 = conv1d_output_length(l1, conv_kernel, conv_stride, conv_padding);
    const std::size_t l2 = conv1d_output_length(c2, pool_kernel, pool_stride, pool_padding);
    return {l0, l1, l2};
}

nlohmann::json to_json(const ModelConfig& cfg) {
    return {{"n", cfg.n},
            {"m", cfg.m},
            {"alpha", cfg.alpha},
            {"hidden", cfg.hidden},
            {"gcn_layers", cfg.gcn_layers},
            {"dropout", cfg.dropout},
            {"cnn_channels", cfg.cnn_channels},
            {"attn_hidden", cfg.attn_hidden},
            {"num_classes", cfg.num_classes},
            {"variant", std::string(variant_name(cfg.variant))},
            {"conv", {cfg.conv_kernel, cfg.conv_stride, cfg.conv_padding}},
            {"pool", {cfg.pool_kernel, cfg.pool_stride, cfg.pool_padding}}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    try {
        ModelConfig cfg;
        cfg.n = j.at("n").get<std::size_t>();
        cfg.m = j.at("m").get<std::size_t>();
        cfg.alpha = j.at("alpha").get<double>();
        cfg.hidden = j.at("hidden").get<std::size_t>();
        cfg.gcn_layers = j.at("gcn_layers").get<std::size_t>();
        cfg.dropout = j.at("dropout").get<double>();
        cfg.cnn_channels = j.at("cnn_channels").get<std::array<std::size_t, 2>>();
        cfg.attn_hidden = j.at("attn_hidden").get<std::size_t>();
        cfg.num_classes = j.at("num_classes").get<std::size_t>();
        auto v = parse_variant(j.at("variant").get<std::string>());
        if (!v) {
            throw FormatError("unknown variant " + j.at("variant").dump());
        }
        cfg.variant = *v;
        const auto conv = j.at("conv").get<std::array<std::size_t, 3>>();
        const auto pool = j.at("pool").get<std::array<std::size_t, 3>>();
        cfg.conv_kernel = conv[0];
        cfg.conv_stride = conv[1];
        cfg.conv_padding = conv[2];
        cfg.pool_kernel = pool[0];
        cfg.pool_stride = pool[1];
        cfg.pool_padding = pool[2];
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed model config: ") + e.what());
    }
}

const Tensor& ModelParams::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
        throw InvalidArgument("model has no parameter '" + name + "'");
    }
    return it->second;
}

std::vector<Tensor> ModelParams::trainable() const {
    std::vector<Tensor> out;
    out.reserve(tensors.size());
    for (const auto& [name, t] : tensors) {
        out.push_back(t);
    }
    return out;
}

ModelParams ModelParams::clone() const {
    ModelParams out;
    for (const auto& [name, t] : tensors) {
        out.tensors.emplace(name, t.clone());
    }
    out.norms = norms;
    return out;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t total = 0;
    for (const auto& [name, t] : tensors) {
        total += t.numel();
    }
    return total;
}

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams params;
    for (const auto& spec : param_specs(cfg)) {
        std::vector<double> data(shape_numel(spec.shape));
        switch (spec.init) {
            case Init::Weight: {
                const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
                for (auto& v : data) {
                    v = rng.uniform(-bound, bound);
                }
                break;
            }
            case Init::Zero:
                break;
            case Init::One:
                std::fill(data.begin(), data.end(), 1.0);
                break;
        }
        params.tensors.emplace(spec.name, Tensor::from(spec.shape, std::move(data), true));
    }
    if (uses_cnn(cfg.variant)) {
        // Running statistics start at the identity transform so a fresh model
        // can already run in eval mode.
        for (auto [name, ch] : {std::pair{"cnn.bn1", cfg.cnn_channels[0]}, {"cnn.bn2", cfg.cnn_channels[1]}}) {
            BatchNormState state;
            state.running_mean.assign(ch, 0.0);
            state.running_var.assign(ch, 1.0);
            state.initialized = true;
            params.norms.emplace(name, std::move(state));
        }
    }
    return params;
}

Checkpoint params_to_checkpoint(const ModelParams& params) {
    Checkpoint ckpt;
    for (const auto& [name, t] : params.tensors) {
        ckpt.arrays.emplace(name, NamedArray{t.shape(), {t.data().begin(), t.data().end()}});
    }
    for (const auto& [name, state] : params.norms) {
        if (!state.initialized) {
            continue;
        }
        const std::size_t ch = state.running_mean.size();
        ckpt.arrays.emplace(name + ".running_mean", NamedArray{{ch}, state.running_mean});
        ckpt.arrays.emplace(name + ".running_var", NamedArray{{ch}, state.running_var});
    }
    return ckpt;
}

ModelParams params_from_checkpoint(const Checkpoint& ckpt, const ModelConfig& cfg) {
    cfg.validate();
    ModelParams params;
    for (const auto& spec : param_specs(cfg)) {
        auto it = ckpt.arrays.find(spec.name);
        if (it == ckpt.arrays.end()) {
            throw FormatError("checkpoint is missing parameter '" + spec.name + "'");
        }
        if (it->second.shape != spec.shape) {
            throw FormatError("checkpoint parameter '" + spec.name + "' has shape " +
                              shape_str(it->second.shape) + ", expected " + shape_str(spec.shape));
        }
        params.tensors.emplace(spec.name, Tensor::from(spec.shape, it->second.data, true));
    }
    if (uses_cnn(cfg.variant)) {
        for (const char* name : {"cnn.bn1", "cnn.bn2"}) {
            BatchNormState state;
            auto mean = ckpt.arrays.find(std::string(name) + ".running_mean");
            auto var = ckpt.arrays.find(std::string(name) + ".running_var");
            if (mean != ckpt.arrays.end() && var != ckpt.arrays.end()) {
                const Shape want{cfg.cnn_channels[name[6] == '1' ? 0 : 1]};
                if (mean->second.shape != want || var->second.shape != want) {
                    throw FormatError(std::string("checkpoint running stats of ") + name +
                                      " have the wrong shape");
                }
                state.running_mean = mean->second.data;
                state.running_var = var->second.data;
                state.initialized = true;
            }
            params.norms.emplace(name, std::move(state));
        }
    }
    return params;
}

Sample prepare_sample(const ViewSet& views, std::size_t label) {
    Sample s;
    s.label = label;
    s.payload.assign(views.payload.values.begin(), views.payload.values.end());
    s.lengths.reserve(views.lengths.values.size());
    for (int v : views.lengths.values) {
        s.lengths.push_back(static_cast<double>(v) / kLengthScale);
    }
    s.num_nodes = views.graph.num_nodes;
    for (const auto& f : views.graph.node_features) {
        s.node_x.push_back(f[0]);
        s.node_x.push_back(f[1]);
    }
    const Tensor norm = normalize_adjacency(views.graph.adjacency());
    auto a = norm.data();
    for (std::size_t i = 0; i < s.num_nodes; ++i) {
        for (std::size_t j = 0; j < s.num_nodes; ++j) {
            if (a[i * s.num_nodes + j] != 0.0) {
                s.adjacency.emplace_back(i, j, a[i * s.num_nodes + j]);
            }
        }
    }
    return s;
}

Batch make_batch(std::span<const Sample* const> samples, const ModelConfig& cfg) {
    const std::size_t b = samples.size();
    const std::size_t seq = cfg.n * cfg.m;
    Batch batch;
    batch.size = b;
    std::vector<double> payload;
    std::vector<double> lengths;
    std::vector<double> node_x;
    payload.reserve(b * seq);
    lengths.reserve(b * cfg.n);
    std::size_t offset = 0;
    auto& adj = batch.adjacency;
    for (std::size_t g = 0; g < b; ++g) {
        const Sample& s = *samples[g];
        if (s.payload.size() != seq || s.lengths.size() != cfg.n) {
            throw DimensionError("sample built for a different n/m: payload " +
                                 std::to_string(s.payload.size()) + " (expected " +
                                 std::to_string(seq) + "), lengths " +
                                 std::to_string(s.lengths.size()) + " (expected " +
                                 std::to_string(cfg.n) + ")");
        }
        if (s.num_nodes == 0) {
            throw InvalidArgument("empty interaction graph in batch");
        }
        payload.insert(payload.end(), s.payload.begin(), s.payload.end());
        lengths.insert(lengths.end(), s.lengths.begin(), s.lengths.end());
        node_x.insert(node_x.end(), s.node_x.begin(), s.node_x.end());
        // Entries are row-major within a sample, so rows are appended in order.
        std::size_t e = 0;
        for (std::size_t r = 0; r < s.num_nodes; ++r) {
            while (e < s.adjacency.size() && std::get<0>(s.adjacency[e]) == r) {
                adj.col_idx.push_back(offset + std::get<1>(s.adjacency[e]));
                adj.values.push_back(std::get<2>(s.adjacency[e]));
                ++e;
            }
            adj.row_ptr.push_back(adj.col_idx.size());
            batch.segments.push_back(g);
        }
        offset += s.num_nodes;
        batch.labels.push_back(s.label);
    }
    adj.rows = offset;
    adj.cols = offset;
    batch.payload = Tensor::from({b, 1, seq}, std::move(payload));
    batch.lengths = Tensor::from({b, cfg.n}, std::move(lengths));
    batch.node_x = Tensor::from({offset, 2}, std::move(node_x));
    return batch;
}

Tensor cnn_branch(const Tensor& payload, ModelParams& params, const ModelConfig& cfg, Mode mode) {
    if (payload.rank() != 3 || payload.dim(1) != 1 || payload.dim(2) != cfg.n * cfg.m) {
        throw DimensionError("cnn_branch: expected input [B, 1, " + std::to_string(cfg.n * cfg.m) +
                             "], got " + shape_str(payload.shape()));
    }
    auto block = [&](const Tensor& x, const std::string& conv, const std::string& bn) {
        Tensor y = conv1d(x, params.at(conv + ".weight"), params.at(conv + ".bias"),
                          cfg.conv_stride, cfg.conv_padding);
        y = batchnorm1d(y, params.at(bn + ".gamma"), params.at(bn + ".beta"), params.norms.at(bn),
                        mode);
        return maxpool1d(relu(y), cfg.pool_kernel, cfg.pool_stride, cfg.pool_padding);
    };
    Tensor h = block(payload, "cnn.conv1", "cnn.bn1");
    h = block(h, "cnn.conv2", "cnn.bn2");  // [B, C2, L2]
    auto att = attention_pool(transpose_last2(h), {params.at("cnn.attn.w1"), params.at("cnn.attn.w2")});
    return linear(flatten(att.pooled), params.at("cnn.out.weight"), params.at("cnn.out.bias"));
}

Tensor lstm_branch(const Tensor& lengths, const ModelParams& params, const ModelConfig& cfg) {
    if (lengths.rank() != 2 || lengths.dim(1) != cfg.n) {
        throw DimensionError("lstm_branch: expected input [B, " + std::to_string(cfg.n) + "], got " +
                             shape_str(lengths.shape()));
    }
    const std::size_t batch = lengths.dim(0);
    const LstmParams lp{params.at("lstm.w_i"), params.at("lstm.w_o"), params.at("lstm.w_f"),
                        params.at("lstm.w_c"), params.at("lstm.b_i"), params.at("lstm.b_o"),
                        params.at("lstm.b_f"), params.at("lstm.b_c")};
    LstmState state{Tensor::zeros({batch, cfg.hidden}), Tensor::zeros({batch, cfg.hidden})};
    std::vector<Tensor> hidden_states;
    hidden_states.reserve(cfg.n);
    for (std::size_t t = 0; t < cfg.n; ++t) {
        state = lstm_cell(slice(lengths, 1, t, 1), state.h, state.c, lp);
        hidden_states.push_back(reshape(state.h, {batch, 1, cfg.hidden}));
    }
    Tensor seq = concat(hidden_states, 1);  // [B, n, hidden]
    return attention_pool(seq, {params.at("lstm.attn.w1"), params.at("lstm.attn.w2")}).pooled;
}

Tensor gcn_branch(const SparseMatrix& adjacency, const Tensor& node_x,
                  std::span<const std::size_t> segments, std::size_t num_graphs,
                  const ModelParams& params, const ModelConfig& cfg, Mode mode, Rng& rng) {
    Tensor h = node_x;
    for (std::size_t l = 0; l < cfg.gcn_layers; ++l) {
        if (l > 0) {
            h = dropout(h, cfg.dropout, rng, mode);
        }
        h = gcn_layer(adjacency, h, params.at("gcn.w" + std::to_string(l)));
    }
    return global_mean_over(h, segments, num_graphs);
}

Tensor sequence_fusion(const Tensor& z_cnn, const Tensor& z_lstm, const ModelParams& params,
                       double dropout_p, Mode mode, Rng& rng) {
    Tensor z = linear(concat({z_cnn, z_lstm}, 1), params.at("fuse.linear1.weight"),
                      params.at("fuse.linear1.bias"));
    z = dropout(z, dropout_p, rng, mode);
    return linear(z, params.at("fuse.linear2.weight"), params.at("fuse.linear2.bias"));
}

namespace {

Tensor classify(const Tensor& z, const ModelParams& params) {
    return softmax(linear(z, params.at("classifier.weight"), params.at("classifier.bias")), 1);
}

Tensor view_fusion(const Tensor& z_gcn, const Tensor& z_seq, double alpha) {
    check_alpha(alpha);
    return add(scale(z_gcn, alpha), scale(z_seq, 1.0 - alpha));
}

}  // namespace

Tensor fuse_and_classify(const Tensor& z_cnn, const Tensor& z_lstm, const Tensor& z_gcn,
                         const ModelParams& params, double alpha, double dropout_p, Mode mode,
                         Rng& rng) {
    check_alpha(alpha);
    Tensor z_seq = sequence_fusion(z_cnn, z_lstm, params, dropout_p, mode, rng);
    return classify(view_fusion(z_gcn, z_seq, alpha), params);
}

ForwardResult variant_forward(const ModelConfig& cfg, const Batch& batch, ModelParams& params,
                              Mode mode, Rng& rng) {
    check_alpha(cfg.alpha);
    ForwardResult r;
    auto stage = [&r](const char* name, Tensor t) {
        r.stages.emplace_back(name, t);
        return t;
    };
    auto need = [&cfg](const Tensor& t, const char* view) {
        if (!t.defined()) {
            throw InvalidArgument("variant " + std::string(variant_name(cfg.variant)) + " needs the " +
                                  view);
        }
    };
    Tensor z_cnn, z_lstm;
    if (uses_cnn(cfg.variant)) {
        need(batch.payload, "payload view");
        z_cnn = stage("z_cnn", cnn_branch(batch.payload, params, cfg, mode));
    }
    if (uses_lstm(cfg.variant)) {
        need(batch.lengths, "length view");
        z_lstm = stage("z_lstm", lstm_branch(batch.lengths, params, cfg));
    }

    // Sequence side first, then the graph, so dropout draws line up between
    // MuFF and CNN+LSTM.
    Tensor z_seq;
    switch (cfg.variant) {
        case Variant::MuFF:
        case Variant::CNN_LSTM:
            z_seq = stage("z_seq", sequence_fusion(z_cnn, z_lstm, params, cfg.dropout, mode, rng));
            break;
        case Variant::CNN_GCN:
        case Variant::LSTM_GCN: {
            const Tensor& lone = cfg.variant == Variant::CNN_GCN ? z_cnn : z_lstm;
            z_seq = linear(lone, params.at("fuse.single.weight"), params.at("fuse.single.bias"));
            z_seq = stage("z_seq", dropout(z_seq, cfg.dropout, rng, mode));
            break;
        }
        default:
            break;
    }

    Tensor z_gcn;
    if (uses_gcn(cfg.variant)) {
        need(batch.node_x, "interaction graph");
        z_gcn = stage("z_gcn", gcn_branch(batch.adjacency, batch.node_x, batch.segments, batch.size,
                                          params, cfg, mode, rng));
    }

    Tensor z;
    switch (cfg.variant) {
        case Variant::CNN:
            z = z_cnn;
            break;
        case Variant::LSTM:
            z = z_lstm;
            break;
        case Variant::GCN:
            z = z_gcn;
            break;
        case Variant::CNN_LSTM:
            z = z_seq;
            break;
        default:
            z = stage("z", view_fusion(z_gcn, z_seq, cfg.alpha));
            break;
    }
    r.probs = stage("probs", classify(z, params));
    return r;
}

}  // namespace muff
