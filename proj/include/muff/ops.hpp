#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "muff/rng.hpp"
#include "muff/tensor.hpp"

namespace muff {

enum class Mode { Train, Eval };

// Compressed sparse row matrix used for block-diagonal graph batches.
// Values are constants; gradients flow only into the dense operand.
struct SparseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::size_t> col_idx;
    std::vector<double> values;
};

// Elementwise ops; operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

// a: [..., k], b: [k, n] -> [..., n]. Leading axes of a are treated as rows.
Tensor matmul(const Tensor& a, const Tensor& b);

// x: [..., in], weight: [in, out], bias: [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Max-subtracted softmax along one axis.
Tensor softmax(const Tensor& x, std::size_t axis);

// Inverted dropout: survivors are scaled by 1 / (1 - p). Identity in eval mode.
Tensor dropout(const Tensor& x, double p, Rng& rng, Mode mode);

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& x, Shape shape);
// [B, ...] -> [B, prod(...)]
Tensor flatten(const Tensor& x);
// [..., a, b] -> [..., b, a]
Tensor transpose_last2(const Tensor& x);

// weights: [B, L], values: [B, L, C] -> [B, C] with out[b] = sum_l w[b,l] * v[b,l,:].
Tensor weighted_sum(const Tensor& weights, const Tensor& values);

// Row means per group. x: [N, d], groups[i] in [0, num_groups) -> [num_groups, d].
Tensor global_mean_over(const Tensor& x, std::span<const std::size_t> groups,
                        std::size_t num_groups);

// a * h for a constant sparse a. h: [a.cols, d] -> [a.rows, d].
Tensor spmm(const SparseMatrix& a, const Tensor& h);

// x: [B, C_in, L], weight: [C_out, C_in, k], bias: [C_out] or undefined.
// Cross-correlation with zero padding; L_out = (L + 2p - k) / stride + 1.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                 std::size_t padding);

struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    bool initialized = false;
    double momentum = 0.1;
    double eps = 1e-5;
};

// x: [B, C, L] or [B, C]. Train mode normalizes with batch statistics and
// updates the running statistics; eval mode uses the running statistics.
Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, Mode mode);

// x: [B, C, L]. Padding positions hold -inf.
Tensor maxpool1d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding);

// Mean negative log-probability of the true class; log argument clamped at 1e-12.
Tensor cross_entropy(const Tensor& probs, std::span<const std::size_t> labels);

}  // namespace muff
