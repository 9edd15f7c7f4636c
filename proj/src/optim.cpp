#include "muff/optim.hpp"

#include <algorithm>
#include <cmath>

#include "muff/error.hpp"

namespace muff {

void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamOptions& options) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.numel(), 0.0);
            state.v.emplace_back(p.numel(), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                             " tensors, got " + std::to_string(params.size()));
    }
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double bias1 = 1.0 - std::pow(options.beta1, t);
    const double bias2 = 1.0 - std::pow(options.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (m.size() != p.numel()) {
            throw DimensionError("adam_step: state shape mismatch for parameter " +
                                 std::to_string(k));
        }
        auto data = p.mutable_data();
        auto g = p.grad();
        for (std::size_t i = 0; i < m.size(); ++i) {
            m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
            v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            data[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
        }
    }
}

double grad_check(const std::function<Tensor()>& f, Tensor x, double h) {
    return grad_check(f, std::vector<Tensor>{std::move(x)}, h);
}

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> xs, double h) {
    for (auto& x : xs) {
        x.zero_grad();
    }
    Tensor out = f();
    if (out.numel() != 1) {
        throw DimensionError("grad_check: function output must be scalar, got " +
                             shape_str(out.shape()));
    }
    out.backward();

    double worst = 0.0;
    for (auto& x : xs) {
        std::vector<double> analytic(x.grad().begin(), x.grad().end());
        auto data = x.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + h;
            const double plus = f().item();
            data[i] = saved - h;
            const double minus = f().item();
            data[i] = saved;
            const double numeric = (plus - minus) / (2.0 * h);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace muff
