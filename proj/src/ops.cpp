#include "muff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "muff/error.hpp"

namespace muff {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

void require_rank(const char* op, const char* name, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": " + name + " must have rank " +
                             std::to_string(rank) + ", got shape " + shape_str(t.shape()));
    }
}

detail::Node& parent(detail::Node& self, std::size_t i) {
    return *self.parents[i];
}

// outer * len * inner decomposition of a shape around one axis.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t len = 1;
    std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) {
        s.outer *= shape[i];
    }
    s.len = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) {
        s.inner *= shape[i];
    }
    return s;
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
    auto xs = x.data();
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out[i] = fwd(xs[i]);
    }
    return Tensor::make_result(x.shape(), std::move(out), name, {x}, [deriv](detail::Node& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) {
            return;
        }
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    auto as = a.data();
    auto bs = b.data();
    std::vector<double> out(as.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = as[i] + bs[i];
    }
    return Tensor::make_result(a.shape(), std::move(out), "add", {a, b}, [](detail::Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            auto& p = parent(self, k);
            if (!p.requires_grad) {
                continue;
            }
            auto& g = p.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i];
            }
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return add(a, scale(b, -1.0));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    auto as = a.data();
    auto bs = b.data();
    std::vector<double> out(as.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = as[i] * bs[i];
    }
    return Tensor::make_result(a.shape(), std::move(out), "mul", {a, b}, [](detail::Node& self) {
        auto& pa = parent(self, 0);
        auto& pb = parent(self, 1);
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * pb.data[i];
            }
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * pa.data[i];
            }
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    auto as = a.data();
    std::vector<double> out(as.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = as[i] * c;
    }
    return Tensor::make_result(a.shape(), std::move(out), "scale", {a}, [c](detail::Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * c;
        }
    });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.data()) {
        total += v;
    }
    return Tensor::make_result({1}, {total}, "sum", {a}, [](detail::Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        for (auto& v : g) {
            v += self.grad[0];
        }
    });
}

Tensor mean(const Tensor& a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor relu(const Tensor& x) {
    return unary(
        x, "relu", [](double v) { return v > 0.0 || std::isnan(v) ? v : 0.0; },  // NaN passes through
        [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, "sigmoid",
        [](double v) {
            if (v >= 0.0) {
                return 1.0 / (1.0 + std::exp(-v));
            }
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double out) { return out * (1.0 - out); });
}

Tensor tanh(const Tensor& x) {
    return unary(
        x, "tanh", [](double v) { return std::tanh(v); },
        [](double, double out) { return 1.0 - out * out; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", "right operand", b, 2);
    if (a.rank() < 1 || a.shape().back() != b.dim(0)) {
        throw DimensionError("matmul: inner axis mismatch " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    const std::size_t k = b.dim(0);
    const std::size_t n = b.dim(1);
    const std::size_t rows = k == 0 ? 0 : a.numel() / k;
    Shape out_shape = a.shape();
    out_shape.back() = n;
    std::vector<double> out(rows * n);
    MutMap(out.data(), rows, n).noalias() =
        ConstMap(a.data().data(), rows, k) * ConstMap(b.data().data(), k, n);
    return Tensor::make_result(
        std::move(out_shape), std::move(out), "matmul", {a, b},
        [rows, k, n](detail::Node& self) {
            auto& pa = parent(self, 0);
            auto& pb = parent(self, 1);
            ConstMap dout(self.grad.data(), rows, n);
            if (pa.requires_grad) {
                MutMap(pa.grad_buffer().data(), rows, k).noalias() +=
                    dout * ConstMap(pb.data.data(), k, n).transpose();
            }
            if (pb.requires_grad) {
                MutMap(pb.grad_buffer().data(), k, n).noalias() +=
                    ConstMap(pa.data.data(), rows, k).transpose() * dout;
            }
        });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    Tensor y = matmul(x, weight);
    if (!bias.defined()) {
        return y;
    }
    const std::size_t n = weight.dim(1);
    if (bias.numel() != n) {
        throw DimensionError("linear: bias length " + std::to_string(bias.numel()) +
                             " does not match output width " + std::to_string(n));
    }
    auto ys = y.data();
    auto bs = bias.data();
    std::vector<double> out(ys.begin(), ys.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += bs[i % n];
    }
    return Tensor::make_result(y.shape(), std::move(out), "bias_add", {y, bias},
                               [n](detail::Node& self) {
                                   auto& py = parent(self, 0);
                                   auto& pb = parent(self, 1);
                                   if (py.requires_grad) {
                                       auto& g = py.grad_buffer();
                                       for (std::size_t i = 0; i < g.size(); ++i) {
                                           g[i] += self.grad[i];
                                       }
                                   }
                                   if (pb.requires_grad) {
                                       auto& g = pb.grad_buffer();
                                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                           g[i % n] += self.grad[i];
                                       }
                                   }
                               });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                             shape_str(x.shape()));
    }
    const auto s = split_axis(x.shape(), axis);
    auto xs = x.data();
    std::vector<double> out(xs.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.len * s.inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < s.len; ++l) {
                mx = std::max(mx, xs[base + l * s.inner]);
            }
            double z = 0.0;
            for (std::size_t l = 0; l < s.len; ++l) {
                const double e = std::exp(xs[base + l * s.inner] - mx);
                out[base + l * s.inner] = e;
                z += e;
            }
            for (std::size_t l = 0; l < s.len; ++l) {
                out[base + l * s.inner] /= z;
            }
        }
    }
    return Tensor::make_result(x.shape(), std::move(out), "softmax", {x}, [s](detail::Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.len * s.inner + in;
                double dot = 0.0;
                for (std::size_t l = 0; l < s.len; ++l) {
                    const std::size_t i = base + l * s.inner;
                    dot += self.grad[i] * self.data[i];
                }
                for (std::size_t l = 0; l < s.len; ++l) {
                    const std::size_t i = base + l * s.inner;
                    g[i] += self.data[i] * (self.grad[i] - dot);
                }
            }
        }
    });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, Mode mode) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw InvalidArgument("dropout: p must lie in [0, 1), got " + std::to_string(p));
    }
    if (mode == Mode::Eval || p == 0.0) {
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - p);
    auto xs = x.data();
    std::vector<double> mask(xs.size());
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mask[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
        out[i] = xs[i] * mask[i];
    }
    return Tensor::make_result(x.shape(), std::move(out), "dropout", {x},
                               [mask = std::move(mask)](detail::Node& self) {
                                   auto& g = parent(self, 0).grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       g[i] += self.grad[i] * mask[i];
                                   }
                               });
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
    if (xs.empty()) {
        throw DimensionError("concat: no inputs");
    }
    const Shape& first = xs.front().shape();
    if (axis >= first.size()) {
        throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                             shape_str(first));
    }
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<std::size_t> lens;
    for (const auto& t : xs) {
        const Shape& s = t.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) {
            ok = i == axis || s[i] == first[i];
        }
        if (!ok) {
            throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " +
                                 shape_str(first) + " along axis " + std::to_string(axis));
        }
        lens.push_back(s[axis]);
        out_shape[axis] += s[axis];
    }
    const auto outer_split = split_axis(first, axis);
    const std::size_t outer = outer_split.outer;
    const std::size_t inner = outer_split.inner;
    const std::size_t total = out_shape[axis];
    std::vector<double> out(outer * total * inner);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        auto src = xs[k].data();
        const std::size_t chunk = lens[k] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(src.begin() + o * chunk, chunk,
                        out.begin() + o * total * inner + offset * inner);
        }
        offset += lens[k];
    }
    return Tensor::make_result(std::move(out_shape), std::move(out), "concat", xs,
                               [lens, outer, inner, total](detail::Node& self) {
                                   std::size_t off = 0;
                                   for (std::size_t k = 0; k < lens.size(); ++k) {
                                       auto& p = parent(self, k);
                                       const std::size_t chunk = lens[k] * inner;
                                       if (p.requires_grad) {
                                           auto& g = p.grad_buffer();
                                           for (std::size_t o = 0; o < outer; ++o) {
                                               const double* src =
                                                   self.grad.data() + o * total * inner + off * inner;
                                               for (std::size_t i = 0; i < chunk; ++i) {
                                                   g[o * chunk + i] += src[i];
                                               }
                                           }
                                       }
                                       off += lens[k];
                                   }
                               });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= x.rank() || start + length > x.dim(axis)) {
        throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                             std::to_string(start + length) + ") on axis " +
                             std::to_string(axis) + " out of bounds for " + shape_str(x.shape()));
    }
    const auto s = split_axis(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] = length;
    auto xs = x.data();
    std::vector<double> out(s.outer * length * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(xs.begin() + (o * s.len + start) * s.inner, length * s.inner,
                    out.begin() + o * length * s.inner);
    }
    return Tensor::make_result(std::move(out_shape), std::move(out), "slice", {x},
                               [s, start, length](detail::Node& self) {
                                   auto& g = parent(self, 0).grad_buffer();
                                   for (std::size_t o = 0; o < s.outer; ++o) {
                                       for (std::size_t i = 0; i < length * s.inner; ++i) {
                                           g[(o * s.len + start) * s.inner + i] +=
                                               self.grad[o * length * s.inner + i];
                                       }
                                   }
                               });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                             shape_str(shape));
    }
    auto xs = x.data();
    return Tensor::make_result(std::move(shape), std::vector<double>(xs.begin(), xs.end()),
                               "reshape", {x}, [](detail::Node& self) {
                                   auto& g = parent(self, 0).grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       g[i] += self.grad[i];
                                   }
                               });
}

Tensor flatten(const Tensor& x) {
    if (x.rank() < 1) {
        throw DimensionError("flatten: scalar input");
    }
    const std::size_t batch = x.dim(0);
    return reshape(x, {batch, batch == 0 ? 0 : x.numel() / batch});
}

Tensor transpose_last2(const Tensor& x) {
    if (x.rank() < 2) {
        throw DimensionError("transpose_last2: rank < 2 for " + shape_str(x.shape()));
    }
    const std::size_t a = x.shape()[x.rank() - 2];
    const std::size_t b = x.shape()[x.rank() - 1];
    const std::size_t outer = a * b == 0 ? 0 : x.numel() / (a * b);
    Shape out_shape = x.shape();
    std::swap(out_shape[x.rank() - 2], out_shape[x.rank() - 1]);
    auto xs = x.data();
    std::vector<double> out(xs.size());
    for (std::size_t o = 0; o < outer; ++o) {
        MutMap(out.data() + o * a * b, b, a) = ConstMap(xs.data() + o * a * b, a, b).transpose();
    }
    return Tensor::make_result(std::move(out_shape), std::move(out), "transpose", {x},
                               [outer, a, b](detail::Node& self) {
                                   auto& g = parent(self, 0).grad_buffer();
                                   for (std::size_t o = 0; o < outer; ++o) {
                                       MutMap(g.data() + o * a * b, a, b) +=
                                           ConstMap(self.grad.data() + o * a * b, b, a).transpose();
                                   }
                               });
}

Tensor weighted_sum(const Tensor& weights, const Tensor& values) {
    require_rank("weighted_sum", "weights", weights, 2);
    require_rank("weighted_sum", "values", values, 3);
    const std::size_t batch = values.dim(0);
    const std::size_t len = values.dim(1);
    const std::size_t ch = values.dim(2);
    if (weights.dim(0) != batch || weights.dim(1) != len) {
        throw DimensionError("weighted_sum: weights " + shape_str(weights.shape()) +
                             " do not match values " + shape_str(values.shape()));
    }
    auto ws = weights.data();
    auto vs = values.data();
    std::vector<double> out(batch * ch, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t l = 0; l < len; ++l) {
            const double w = ws[b * len + l];
            const double* row = vs.data() + (b * len + l) * ch;
            for (std::size_t c = 0; c < ch; ++c) {
                out[b * ch + c] += w * row[c];
            }
        }
    }
    return Tensor::make_result(
        {batch, ch}, std::move(out), "weighted_sum", {weights, values},
        [batch, len, ch](detail::Node& self) {
            auto& pw = parent(self, 0);
            auto& pv = parent(self, 1);
            for (std::size_t b = 0; b < batch; ++b) {
                const double* dout = self.grad.data() + b * ch;
                for (std::size_t l = 0; l < len; ++l) {
                    const std::size_t row = (b * len + l) * ch;
                    if (pw.requires_grad) {
                        double acc = 0.0;
                        for (std::size_t c = 0; c < ch; ++c) {
                            acc += dout[c] * pv.data[row + c];
                        }
                        pw.grad_buffer()[b * len + l] += acc;
                    }
                    if (pv.requires_grad) {
                        auto& g = pv.grad_buffer();
                        const double w = pw.data[b * len + l];
                        for (std::size_t c = 0; c < ch; ++c) {
                            g[row + c] += w * dout[c];
                        }
                    }
                }
            }
        });
}

Tensor global_mean_over(const Tensor& x, std::span<const std::size_t> groups,
                        std::size_t num_groups) {
    require_rank("global_mean_over", "x", x, 2);
    const std::size_t n = x.dim(0);
    const std::size_t d = x.dim(1);
    if (groups.size() != n) {
        throw DimensionError("global_mean_over: " + std::to_string(groups.size()) +
                             " group ids for " + std::to_string(n) + " rows");
    }
    std::vector<double> counts(num_groups, 0.0);
    for (auto g : groups) {
        if (g >= num_groups) {
            throw DimensionError("global_mean_over: group id " + std::to_string(g) +
                                 " out of range");
        }
        counts[g] += 1.0;
    }
    for (std::size_t g = 0; g < num_groups; ++g) {
        if (counts[g] == 0.0) {
            throw InvalidArgument("global_mean_over: group " + std::to_string(g) + " is empty");
        }
    }
    auto xs = x.data();
    std::vector<double> out(num_groups * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double inv = 1.0 / counts[groups[i]];
        for (std::size_t c = 0; c < d; ++c) {
            out[groups[i] * d + c] += xs[i * d + c] * inv;
        }
    }
    std::vector<std::size_t> group_ids(groups.begin(), groups.end());
    return Tensor::make_result(
        {num_groups, d}, std::move(out), "global_mean", {x},
        [group_ids = std::move(group_ids), counts = std::move(counts), d](detail::Node& self) {
            auto& g = parent(self, 0).grad_buffer();
            for (std::size_t i = 0; i < group_ids.size(); ++i) {
                const double inv = 1.0 / counts[group_ids[i]];
                for (std::size_t c = 0; c < d; ++c) {
                    g[i * d + c] += self.grad[group_ids[i] * d + c] * inv;
                }
            }
        });
}

Tensor spmm(const SparseMatrix& a, const Tensor& h) {
    require_rank("spmm", "dense operand", h, 2);
    if (h.dim(0) != a.cols) {
        throw DimensionError("spmm: sparse matrix has " + std::to_string(a.cols) +
                             " columns but dense operand has " + std::to_string(h.dim(0)) +
                             " rows");
    }
    const std::size_t d = h.dim(1);
    auto hs = h.data();
    std::vector<double> out(a.rows * d, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::size_t e = a.row_ptr[r]; e < a.row_ptr[r + 1]; ++e) {
            const double v = a.values[e];
            const double* src = hs.data() + a.col_idx[e] * d;
            double* dst = out.data() + r * d;
            for (std::size_t c = 0; c < d; ++c) {
                dst[c] += v * src[c];
            }
        }
    }
    return Tensor::make_result({a.rows, d}, std::move(out), "spmm", {h},
                               [a, d](detail::Node& self) {
                                   auto& g = parent(self, 0).grad_buffer();
                                   for (std::size_t r = 0; r < a.rows; ++r) {
                                       for (std::size_t e = a.row_ptr[r]; e < a.row_ptr[r + 1];
                                            ++e) {
                                           const double v = a.values[e];
                                           const double* src = self.grad.data() + r * d;
                                           double* dst = g.data() + a.col_idx[e] * d;
                                           for (std::size_t c = 0; c < d; ++c) {
                                               dst[c] += v * src[c];
                                           }
                                       }
                                   }
                               });
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                 std::size_t padding) {
    if (stride == 0) {
        throw InvalidArgument("stride must be >= 1");
    }
    if (kernel == 0 || kernel > length + 2 * padding) {
        throw InvalidArgument("window of " + std::to_string(kernel) +
                              " does not fit padded length " +
                              std::to_string(length + 2 * padding));
    }
    return (length + 2 * padding - kernel) / stride + 1;
}

namespace {

// col[(ci * k + j) * l_out + t] = x[ci, t * stride + j - padding] (0 outside).
void im2col(const double* x, std::size_t c_in, std::size_t len, std::size_t k,
            std::size_t stride, std::size_t padding, std::size_t l_out, double* col) {
    for (std::size_t ci = 0; ci < c_in; ++ci) {
        for (std::size_t j = 0; j < k; ++j) {
            double* row = col + (ci * k + j) * l_out;
            for (std::size_t t = 0; t < l_out; ++t) {
                const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + j) -
                                           static_cast<std::ptrdiff_t>(padding);
                row[t] = (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) ? x[ci * len + pos]
                                                                              : 0.0;
            }
        }
    }
}

void col2im_add(const double* col, std::size_t c_in, std::size_t len, std::size_t k,
                std::size_t stride, std::size_t padding, std::size_t l_out, double* dx) {
    for (std::size_t ci = 0; ci < c_in; ++ci) {
        for (std::size_t j = 0; j < k; ++j) {
            const double* row = col + (ci * k + j) * l_out;
            for (std::size_t t = 0; t < l_out; ++t) {
                const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + j) -
                                           static_cast<std::ptrdiff_t>(padding);
                if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) {
                    dx[ci * len + pos] += row[t];
                }
            }
        }
    }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    require_rank("conv1d", "input", x, 3);
    require_rank("conv1d", "weight", weight, 3);
    const std::size_t batch = x.dim(0);
    const std::size_t c_in = x.dim(1);
    const std::size_t len = x.dim(2);
    const std::size_t c_out = weight.dim(0);
    const std::size_t k = weight.dim(2);
    if (weight.dim(1) != c_in) {
        throw DimensionError("conv1d: channel axis (1) mismatch: input has " +
                             std::to_string(c_in) + " channels, weight expects " +
                             std::to_string(weight.dim(1)));
    }
    if (bias.defined() && bias.numel() != c_out) {
        throw DimensionError("conv1d: bias axis (0) has " + std::to_string(bias.numel()) +
                             " entries, expected " + std::to_string(c_out));
    }
    const std::size_t l_out = conv1d_output_length(len, k, stride, padding);
    const std::size_t ck = c_in * k;

    auto xs = x.data();
    ConstMap w(weight.data().data(), c_out, ck);
    std::vector<double> out(batch * c_out * l_out);
    std::vector<double> col(ck * l_out);
    for (std::size_t b = 0; b < batch; ++b) {
        im2col(xs.data() + b * c_in * len, c_in, len, k, stride, padding, l_out, col.data());
        MutMap y(out.data() + b * c_out * l_out, c_out, l_out);
        y.noalias() = w * ConstMap(col.data(), ck, l_out);
        if (bias.defined()) {
            for (std::size_t co = 0; co < c_out; ++co) {
                y.row(co).array() += bias.data()[co];
            }
        }
    }

    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) {
        inputs.push_back(bias);
    }
    return Tensor::make_result(
        {batch, c_out, l_out}, std::move(out), "conv1d", std::move(inputs),
        [=](detail::Node& self) {
            auto& px = parent(self, 0);
            auto& pw = parent(self, 1);
            detail::Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
            std::vector<double> col_buf(ck * l_out);
            std::vector<double> dcol(px.requires_grad ? ck * l_out : 0);
            ConstMap wmat(pw.data.data(), c_out, ck);
            for (std::size_t b = 0; b < batch; ++b) {
                ConstMap dy(self.grad.data() + b * c_out * l_out, c_out, l_out);
                if (pw.requires_grad) {
                    im2col(px.data.data() + b * c_in * len, c_in, len, k, stride, padding, l_out,
                           col_buf.data());
                    MutMap(pw.grad_buffer().data(), c_out, ck).noalias() +=
                        dy * ConstMap(col_buf.data(), ck, l_out).transpose();
                }
                if (pb && pb->requires_grad) {
                    auto& g = pb->grad_buffer();
                    // plain loop: Eigen's vectorized sum peels by pointer alignment,
                    // which would make the result depend on where the heap put dy
                    const double* d = self.grad.data() + b * c_out * l_out;
                    for (std::size_t co = 0; co < c_out; ++co) {
                        g[co] += std::accumulate(d + co * l_out, d + (co + 1) * l_out, 0.0);
                    }
                }
                if (px.requires_grad) {
                    MutMap(dcol.data(), ck, l_out).noalias() = wmat.transpose() * dy;
                    col2im_add(dcol.data(), c_in, len, k, stride, padding, l_out,
                               px.grad_buffer().data() + b * c_in * len);
                }
            }
        });
}

Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, Mode mode) {
    if (x.rank() != 2 && x.rank() != 3) {
        throw DimensionError("batchnorm1d: input must be [B, C] or [B, C, L], got " +
                             shape_str(x.shape()));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t ch = x.dim(1);
    const std::size_t len = x.rank() == 3 ? x.dim(2) : 1;
    if (gamma.numel() != ch || beta.numel() != ch) {
        throw DimensionError("batchnorm1d: channel axis (1) has " + std::to_string(ch) +
                             " channels but gamma/beta have " + std::to_string(gamma.numel()) +
                             "/" + std::to_string(beta.numel()));
    }
    const std::size_t count = batch * len;
    if (count == 0) {
        throw InvalidArgument("batchnorm1d: no elements to normalize");
    }
    if (mode == Mode::Eval && !state.initialized) {
        throw InvalidArgument("batchnorm1d: eval mode with uninitialized running statistics");
    }

    auto xs = x.data();
    std::vector<double> mu(ch);
    std::vector<double> inv_std(ch);
    if (mode == Mode::Train) {
        if (!state.initialized) {
            state.running_mean.assign(ch, 0.0);
            state.running_var.assign(ch, 1.0);
            state.initialized = true;
        }
        for (std::size_t c = 0; c < ch; ++c) {
            double s = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const double* row = xs.data() + (b * ch + c) * len;
                for (std::size_t l = 0; l < len; ++l) {
                    s += row[l];
                }
            }
            const double m = s / static_cast<double>(count);
            double sq = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const double* row = xs.data() + (b * ch + c) * len;
                for (std::size_t l = 0; l < len; ++l) {
                    sq += (row[l] - m) * (row[l] - m);
                }
            }
            const double var = sq / static_cast<double>(count);
            const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
            mu[c] = m;
            inv_std[c] = 1.0 / std::sqrt(var + state.eps);
            state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * m;
            state.running_var[c] =
                (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
        }
    } else {
        if (state.running_mean.size() != ch) {
            throw DimensionError("batchnorm1d: running statistics have " +
                                 std::to_string(state.running_mean.size()) + " channels, input has " +
                                 std::to_string(ch));
        }
        for (std::size_t c = 0; c < ch; ++c) {
            mu[c] = state.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
        }
    }

    auto gs = gamma.data();
    auto bs = beta.data();
    std::vector<double> xhat(xs.size());
    std::vector<double> out(xs.size());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t base = (b * ch + c) * len;
            for (std::size_t l = 0; l < len; ++l) {
                xhat[base + l] = (xs[base + l] - mu[c]) * inv_std[c];
                out[base + l] = gs[c] * xhat[base + l] + bs[c];
            }
        }
    }
    const bool train = mode == Mode::Train;
    return Tensor::make_result(
        x.shape(), std::move(out), "batchnorm1d", {x, gamma, beta},
        [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
            auto& px = parent(self, 0);
            auto& pg = parent(self, 1);
            auto& pb = parent(self, 2);
            const auto& dy = self.grad;
            for (std::size_t c = 0; c < ch; ++c) {
                double sum_dy = 0.0;
                double sum_dy_xhat = 0.0;
                for (std::size_t b = 0; b < batch; ++b) {
                    const std::size_t base = (b * ch + c) * len;
                    for (std::size_t l = 0; l < len; ++l) {
                        sum_dy += dy[base + l];
                        sum_dy_xhat += dy[base + l] * xhat[base + l];
                    }
                }
                if (pg.requires_grad) {
                    pg.grad_buffer()[c] += sum_dy_xhat;
                }
                if (pb.requires_grad) {
                    pb.grad_buffer()[c] += sum_dy;
                }
                if (!px.requires_grad) {
                    continue;
                }
                auto& g = px.grad_buffer();
                const double gam = pg.data[c];
                const double n = static_cast<double>(count);
                for (std::size_t b = 0; b < batch; ++b) {
                    const std::size_t base = (b * ch + c) * len;
                    for (std::size_t l = 0; l < len; ++l) {
                        const std::size_t i = base + l;
                        if (train) {
                            g[i] += gam * inv_std[c] / n *
                                    (n * dy[i] - sum_dy - xhat[i] * sum_dy_xhat);
                        } else {
                            g[i] += gam * inv_std[c] * dy[i];
                        }
                    }
                }
            }
        });
}

Tensor maxpool1d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
    require_rank("maxpool1d", "input", x, 3);
    const std::size_t batch = x.dim(0);
    const std::size_t ch = x.dim(1);
    const std::size_t len = x.dim(2);
    const std::size_t l_out = conv1d_output_length(len, kernel, stride, padding);
    auto xs = x.data();
    std::vector<double> out(batch * ch * l_out);
    std::vector<std::size_t> arg(out.size());
    for (std::size_t t = 0; t < l_out; ++t) {
        const std::ptrdiff_t lo = static_cast<std::ptrdiff_t>(t * stride) -
                                  static_cast<std::ptrdiff_t>(padding);
        const std::ptrdiff_t hi = lo + static_cast<std::ptrdiff_t>(kernel);
        const std::ptrdiff_t from = std::max<std::ptrdiff_t>(lo, 0);
        const std::ptrdiff_t to = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(len));
        if (from >= to) {
            throw InvalidArgument("maxpool1d: window " + std::to_string(t) +
                                  " covers only padding (invalid geometry)");
        }
        for (std::size_t bc = 0; bc < batch * ch; ++bc) {
            const double* row = xs.data() + bc * len;
            std::size_t best = static_cast<std::size_t>(from);
            for (std::ptrdiff_t p = from + 1; p < to; ++p) {
                if (row[p] > row[best]) {
                    best = static_cast<std::size_t>(p);
                }
            }
            out[bc * l_out + t] = row[best];
            arg[bc * l_out + t] = bc * len + best;
        }
    }
    return Tensor::make_result({batch, ch, l_out}, std::move(out), "maxpool1d", {x},
                               [arg = std::move(arg)](detail::Node& self) {
                                   auto& g = parent(self, 0).grad_buffer();
                                   for (std::size_t i = 0; i < arg.size(); ++i) {
                                       g[arg[i]] += self.grad[i];
                                   }
                               });
}

Tensor cross_entropy(const Tensor& probs, std::span<const std::size_t> labels) {
    require_rank("cross_entropy", "probs", probs, 2);
    const std::size_t batch = probs.dim(0);
    const std::size_t classes = probs.dim(1);
    if (labels.size() != batch) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                             " labels for batch of " + std::to_string(batch));
    }
    if (batch == 0) {
        throw InvalidArgument("cross_entropy: empty batch");
    }
    constexpr double kClamp = 1e-12;
    auto ps = probs.data();
    double loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        if (labels[i] >= classes) {
            throw InvalidArgument("cross_entropy: label " + std::to_string(labels[i]) +
                                  " out of range for " + std::to_string(classes) + " classes");
        }
        double row = 0.0;
        for (std::size_t k = 0; k < classes; ++k) {
            row += ps[i * classes + k];
        }
        if (std::abs(row - 1.0) > 1e-6) {
            throw InvalidArgument("cross_entropy: probability row " + std::to_string(i) +
                                  " sums to " + std::to_string(row));
        }
        loss -= std::log(std::max(ps[i * classes + labels[i]], kClamp));
    }
    loss /= static_cast<double>(batch);
    std::vector<std::size_t> y(labels.begin(), labels.end());
    return Tensor::make_result(
        {1}, {loss}, "cross_entropy", {probs}, [y = std::move(y), classes](detail::Node& self) {
            auto& p = parent(self, 0);
            auto& g = p.grad_buffer();
            const double n = static_cast<double>(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) {
                const double v = p.data[i * classes + y[i]];
                if (v > kClamp) {
                    g[i * classes + y[i]] -= self.grad[0] / (n * v);
                }
            }
        });
}

}  // namespace muff
