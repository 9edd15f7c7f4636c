#include "muff/layers.hpp"

#include <cmath>

#include "muff/error.hpp"

namespace muff {

LstmState lstm_cell(const Tensor& x_t, const Tensor& h_prev, const Tensor& c_prev,
                    const LstmParams& p) {
    if (x_t.rank() != 2 || h_prev.rank() != 2 || c_prev.shape() != h_prev.shape() ||
        x_t.dim(0) != h_prev.dim(0)) {
        throw DimensionError("lstm_cell: expected x [B, in], H/C [B, hidden]; got x " +
                             shape_str(x_t.shape()) + ", H " + shape_str(h_prev.shape()) +
                             ", C " + shape_str(c_prev.shape()));
    }
    const std::size_t width = h_prev.dim(1) + x_t.dim(1);
    for (const Tensor* w : {&p.w_i, &p.w_o, &p.w_f, &p.w_c}) {
        if (w->rank() != 2 || w->dim(0) != width || w->dim(1) != h_prev.dim(1)) {
            throw DimensionError("lstm_cell: gate weight " + shape_str(w->shape()) +
                                 " does not match [H, x] width " + std::to_string(width));
        }
    }
    Tensor hx = concat({h_prev, x_t}, 1);
    Tensor i = sigmoid(linear(hx, p.w_i, p.b_i));
    Tensor o = sigmoid(linear(hx, p.w_o, p.b_o));
    Tensor f = sigmoid(linear(hx, p.w_f, p.b_f));
    Tensor candidate = tanh(linear(hx, p.w_c, p.b_c));
    Tensor c = add(mul(f, c_prev), mul(i, candidate));
    Tensor h = mul(o, tanh(c));
    return {h, c};
}

AttentionOutput attention_pool(const Tensor& h, const AttentionParams& p) {
    if (h.rank() != 3) {
        throw DimensionError("attention_pool: expected [B, positions, d], got " +
                             shape_str(h.shape()));
    }
    const std::size_t batch = h.dim(0);
    const std::size_t positions = h.dim(1);
    if (positions == 0) {
        throw InvalidArgument("attention_pool: zero positions");
    }
    Tensor scores = sigmoid(matmul(relu(matmul(h, p.w1)), p.w2));  // [B, P, 1]
    Tensor weights = softmax(reshape(scores, {batch, positions}), 1);
    return {weighted_sum(weights, h), weights};
}

Tensor normalize_adjacency(const Tensor& adjacency) {
    if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1)) {
        throw DimensionError("normalize_adjacency: expected square matrix, got " +
                             shape_str(adjacency.shape()));
    }
    const std::size_t n = adjacency.dim(0);
    auto a = adjacency.data();
    for (std::size_t i = 0; i < n; ++i) {
        if (a[i * n + i] != 0.0) {
            throw InvalidArgument("normalize_adjacency: nonzero diagonal at node " +
                                  std::to_string(i));
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            if (a[i * n + j] != a[j * n + i]) {
                throw InvalidArgument("normalize_adjacency: asymmetric entry (" +
                                      std::to_string(i) + ", " + std::to_string(j) + ")");
            }
        }
    }
    std::vector<double> inv_sqrt_deg(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 1.0;
        for (std::size_t j = 0; j < n; ++j) {
            deg += a[i * n + j];
        }
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    std::vector<double> out(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double tilde = a[i * n + j] + (i == j ? 1.0 : 0.0);
            out[i * n + j] = inv_sqrt_deg[i] * tilde * inv_sqrt_deg[j];
        }
    }
    return Tensor::from({n, n}, std::move(out));
}

Tensor gcn_layer(const Tensor& a_norm, const Tensor& h, const Tensor& w) {
    if (a_norm.rank() != 2 || a_norm.dim(1) != h.dim(0)) {
        throw DimensionError("gcn_layer: adjacency " + shape_str(a_norm.shape()) +
                             " does not match node features " + shape_str(h.shape()));
    }
    return relu(matmul(a_norm, matmul(h, w)));
}

Tensor gcn_layer(const SparseMatrix& a_norm, const Tensor& h, const Tensor& w) {
    return relu(spmm(a_norm, matmul(h, w)));
}

}  // namespace muff
