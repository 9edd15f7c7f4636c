#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "muff/checkpoint.hpp"
#include "muff/layers.hpp"
#include "muff/ops.hpp"
#include "muff/rng.hpp"
#include "muff/views.hpp"

namespace muff {

enum class Variant { MuFF, CNN, LSTM, GCN, CNN_GCN, LSTM_GCN, CNN_LSTM };

std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);
const std::array<Variant, 7>& all_variants();

bool uses_cnn(Variant v);
bool uses_lstm(Variant v);
bool uses_gcn(Variant v);

struct ModelConfig {
    std::size_t n = 40;   // packets per flow
    std::size_t m = 16;   // payload bytes per packet
    double alpha = 0.5;   // weight of the interaction view in the fusion
    std::size_t hidden = 512;
    std::size_t gcn_layers = 3;
    double dropout = 0.5;
    std::array<std::size_t, 2> cnn_channels{32, 64};
    std::size_t attn_hidden = 64;
    std::size_t num_classes = 2;
    Variant variant = Variant::MuFF;

    // Convolution and pooling geometry shared by both CNN blocks.
    std::size_t conv_kernel = 25;
    std::size_t conv_stride = 1;
    std::size_t conv_padding = 12;
    std::size_t pool_kernel = 3;
    std::size_t pool_stride = 3;
    std::size_t pool_padding = 1;

    // Every violated constraint, empty when the config is usable.
    std::vector<std::string> problems() const;
    // Throws ConfigError listing problems().
    void validate() const;

    // Sequence positions: input, after block 1, after block 2.
    std::array<std::size_t, 3> cnn_positions() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Trainable tensors and batch-norm running statistics, keyed by name.
struct ModelParams {
    std::map<std::string, Tensor> tensors;
    std::map<std::string, BatchNormState> norms;

    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    // Parameters in name order (the order the optimizer state follows).
    std::vector<Tensor> trainable() const;
    ModelParams clone() const;
    std::size_t parameter_count() const;
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases and beta zero; gamma one.
// Only the branches the variant uses get parameters.
ModelParams init_params(const ModelConfig& cfg, Rng& rng);

Checkpoint params_to_checkpoint(const ModelParams& params);
// Restores tensors and norms from a checkpoint; shapes are checked against cfg.
ModelParams params_from_checkpoint(const Checkpoint& ckpt, const ModelConfig& cfg);

// Model-ready numeric form of one flow's views.
struct Sample {
    std::vector<double> payload;  // n * m raw byte values
    std::vector<double> lengths;  // n signed lengths / 1500
    std::vector<double> node_x;   // num_nodes * 2
    std::size_t num_nodes = 0;
    // Nonzeros of the normalized adjacency (row, col, value).
    std::vector<std::tuple<std::size_t, std::size_t, double>> adjacency;
    std::size_t label = 0;
};

Sample prepare_sample(const ViewSet& views, std::size_t label);

struct Batch {
    Tensor payload;   // [B, 1, n*m]
    Tensor lengths;   // [B, n]
    SparseMatrix adjacency;  // block diagonal over all nodes
    Tensor node_x;    // [N_total, 2]
    std::vector<std::size_t> segments;  // graph index of every node
    std::vector<std::size_t> labels;
    std::size_t size = 0;
};

Batch make_batch(std::span<const Sample* const> samples, const ModelConfig& cfg);

// Payload branch: two conv/batchnorm/relu/maxpool blocks, attention over the
// remaining positions, linear to `hidden`. Returns [B, hidden].
Tensor cnn_branch(const Tensor& payload, ModelParams& params, const ModelConfig& cfg, Mode mode);

// Length branch: LSTM unrolled over n steps from zero state, attention over
// the hidden states. lengths are already scaled by 1/1500. Returns [B, hidden].
Tensor lstm_branch(const Tensor& lengths, const ModelParams& params, const ModelConfig& cfg);

// Interaction branch: gcn_layers GCN layers with dropout between them, then a
// per-graph mean over nodes. Returns [num_graphs, hidden].
Tensor gcn_branch(const SparseMatrix& adjacency, const Tensor& node_x,
                  std::span<const std::size_t> segments, std::size_t num_graphs,
                  const ModelParams& params, const ModelConfig& cfg, Mode mode, Rng& rng);

// Z_SEQ = Linear(Dropout(Linear(z_cnn || z_lstm))).
Tensor sequence_fusion(const Tensor& z_cnn, const Tensor& z_lstm, const ModelParams& params,
                       double dropout_p, Mode mode, Rng& rng);

// Z = alpha * z_gcn + (1 - alpha) * Z_SEQ, then linear classifier and softmax.
Tensor fuse_and_classify(const Tensor& z_cnn, const Tensor& z_lstm, const Tensor& z_gcn,
                         const ModelParams& params, double alpha, double dropout_p, Mode mode,
                         Rng& rng);

struct ForwardResult {
    Tensor probs;  // [B, num_classes]
    // Intermediate representations in evaluation order, for diagnostics.
    std::vector<std::pair<std::string, Tensor>> stages;
};

ForwardResult variant_forward(const ModelConfig& cfg, const Batch& batch, ModelParams& params,
                              Mode mode, Rng& rng);

}  // namespace muff
