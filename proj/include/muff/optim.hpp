#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "muff/tensor.hpp"

namespace muff {

struct AdamOptions {
    double lr = 0.002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-parameter first/second moment buffers plus the shared step counter.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t t = 0;
};

// Bias-corrected Adam update applied in place to every parameter's data using
// its accumulated gradient (a missing gradient counts as zero).
void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamOptions& options);

// Max elementwise relative error between backprop and central differences for
// the leaf x used inside f. Relative error uses max(|a|, |b|, 1e-8) as the
// denominator. f must return a single-element tensor.
double grad_check(const std::function<Tensor()>& f, Tensor x, double h = 1e-5);

// Same check applied to several leaves; returns the overall maximum.
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> xs, double h = 1e-5);

}  // namespace muff
