#pragma once

#include <utility>

#include "muff/ops.hpp"

namespace muff {

// Gate weights act on the concatenation [H_prev, x_t]: each W is
// [hidden + input, hidden]. There are exactly three gates and one candidate
// transform; no peepholes and no separate recurrent matrices.
struct LstmParams {
    Tensor w_i, w_o, w_f, w_c;
    Tensor b_i, b_o, b_f, b_c;
};

struct LstmState {
    Tensor h;
    Tensor c;
};

// One step: i, o, f = sigmoid(W [H, x] + b); C = f*C_prev + i*tanh(W_c [H, x] + b_c);
// H = o*tanh(C). x_t: [B, in], h_prev/c_prev: [B, hidden].
LstmState lstm_cell(const Tensor& x_t, const Tensor& h_prev, const Tensor& c_prev,
                    const LstmParams& p);

struct AttentionParams {
    Tensor w1;  // [d, d_att]
    Tensor w2;  // [d_att, 1]
};

struct AttentionOutput {
    Tensor pooled;   // [B, d]
    Tensor weights;  // [B, positions], rows sum to one
};

// Scores e_i = sigmoid(W2 relu(W1 h_i)), weights a = softmax(e) over positions,
// output sum_i a_i h_i. h: [B, positions, d].
AttentionOutput attention_pool(const Tensor& h, const AttentionParams& p);

// D^-1/2 (A + I) D^-1/2 for a binary symmetric adjacency with zero diagonal.
Tensor normalize_adjacency(const Tensor& adjacency);

// relu(A_norm H W). a_norm: [N, N] dense or sparse, h: [N, d_in], w: [d_in, d_out].
Tensor gcn_layer(const Tensor& a_norm, const Tensor& h, const Tensor& w);
Tensor gcn_layer(const SparseMatrix& a_norm, const Tensor& h, const Tensor& w);

}  // namespace muff
