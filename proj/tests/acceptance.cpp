// Acceptance run: one PASS/FAIL line per criterion. Arguments select
// criteria by number; no arguments runs all of them.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "muff/cli.hpp"
#include "muff/dataset.hpp"
#include "muff/experiments.hpp"
#include "muff/flow_jsonl.hpp"
#include "muff/metrics.hpp"
#include "muff/model.hpp"
#include "muff/optim.hpp"
#include "muff/packet.hpp"
#include "muff/split.hpp"
#include "muff/trainer.hpp"
#include "muff/views.hpp"
#include "synthetic.hpp"

using namespace muff;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

// shared synthetic corpus for 7-9
const Dataset& synthetic_set() {
    static const Dataset ds = [] {
        ModelConfig d;
        return build_dataset(synth::make_separable_flows(400, 2024), d.n, d.m);
    }();
    return ds;
}

ModelConfig hidden64() {
    ModelConfig c;
    c.hidden = 64;
    return c;
}

// ---- 1, 2: golden views ----

Outcome payload_golden() {
    const std::vector<int> want{42, 5, 0, 168, 0, 0, 42, 5, 0, 169, 0, 0, 42, 5, 0, 188};
    auto t0 = Clock::now();
    Flow f;
    f.packets.push_back({0.0, Direction::ClientToServer, 60, *from_hex("2a0500a800002a0500a900002a0500bc")});
    auto seq = build_payload_sequence(f, 1, 16);
    const double ms = seconds_since(t0) * 1e3;
    std::vector<int> got(seq.values.begin(), seq.values.end());
    return {got == want && ms < 1.0, fmt("exact=%g runtime=%.4f ms (limit 1 ms)", got == want, ms)};
}

Outcome length_golden() {
    Flow f;
    f.packets = {{0.0, Direction::ServerToClient, 100, {}},
                 {0.1, Direction::ClientToServer, 120, {}},
                 {0.2, Direction::ServerToClient, 80, {}}};
    auto got = build_length_sequence(f, 5).values;
    const std::vector<int> want{100, -120, 80, 0, 0};
    std::vector<int> g(got.begin(), got.end());
    return {g == want, g == want ? "[100,-120,80,0,0] exact" : "mismatch"};
}

// ---- 3: CNN geometry ----

Outcome cnn_geometry() {
    ModelConfig cfg;
    Rng rng(3);
    auto p = init_params(cfg, rng);
    auto x = Tensor::zeros({2, 1, cfg.n * cfg.m});
    std::vector<std::size_t> lengths{x.dim(2)};
    Tensor h = x;
    for (int blk = 1; blk <= 2; ++blk) {
        const std::string pre = "cnn.conv" + std::to_string(blk);
        h = conv1d(h, p.at(pre + ".weight"), p.at(pre + ".bias"), cfg.conv_stride, cfg.conv_padding);
        lengths.push_back(h.dim(2));
        const std::string bn = "cnn.bn" + std::to_string(blk);
        h = relu(batchnorm1d(h, p.at(bn + ".gamma"), p.at(bn + ".beta"), p.norms.at(bn), Mode::Eval));
        h = maxpool1d(h, cfg.pool_kernel, cfg.pool_stride, cfg.pool_padding);
        lengths.push_back(h.dim(2));
    }
    auto z = cnn_branch(x, p, cfg, Mode::Eval);
    const bool ok = lengths == std::vector<std::size_t>{640, 640, 214, 214, 72} &&
                    h.shape() == Shape{2, 64, 72} && z.shape() == Shape{2, cfg.hidden} &&
                    cfg.cnn_positions() == std::array<std::size_t, 3>{640, 214, 72};
    return {ok, fmt("positions %g -> %g -> %g", lengths[0], lengths[2], lengths[4])};
}

// ---- 4: gradient suite ----

Tensor rand_t(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor probe(const Tensor& y) {
    Rng rng(123);
    std::vector<double> r(y.numel());
    for (auto& v : r) v = rng.uniform(-1, 1);
    return sum(mul(y, Tensor::from(y.shape(), r)));
}

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

Outcome gradient_suite() {
    auto t0 = Clock::now();
    std::map<std::string, double> worst;
    auto check = [&](const std::string& op, const std::function<Tensor()>& f, std::vector<Tensor> xs,
                     double h = 1e-5) { worst[op] = std::max(worst[op], grad_check(f, std::move(xs), h)); };
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t b = dim(rng, 1, 3), r = dim(rng, 1, 4), c = dim(rng, 1, 5);
        auto a = rand_t(rng, {b, r, c}), e = rand_t(rng, {b, r, c});
        check("add", [&] { return probe(add(a, e)); }, {a, e});
        check("sub", [&] { return probe(sub(a, e)); }, {a, e});
        check("mul", [&] { return probe(mul(a, e)); }, {a, e});
        check("scale", [&] { return probe(scale(a, 2.3)); }, {a});
        check("sum", [&] { return mul(sum(a), sum(e)); }, {a, e});
        check("mean", [&] { return mul(mean(a), mean(a)); }, {a});
        check("sigmoid", [&] { return probe(sigmoid(a)); }, {a});
        check("tanh", [&] { return probe(tanh(a)); }, {a});
        std::vector<double> rv(b * r * c);
        for (auto& v : rv) v = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.1, 1.0);
        auto rl = Tensor::from({b, r, c}, rv, true);
        check("relu", [&] { return probe(relu(rl)); }, {rl});
        for (std::size_t axis = 0; axis < 3; ++axis)
            check("softmax", [&] { return probe(softmax(a, axis)); }, {a});
        auto w = rand_t(rng, {c, dim(rng, 1, 4)});
        auto bias = rand_t(rng, {w.dim(1)});
        check("matmul", [&] { return probe(matmul(a, w)); }, {a, w});
        check("linear", [&] { return probe(linear(a, w, bias)); }, {a, w, bias});
        check("transpose_last2", [&] { return probe(transpose_last2(a)); }, {a});
        check("reshape", [&] { return probe(reshape(a, {b * r, c})); }, {a});
        check("flatten", [&] { return probe(flatten(a)); }, {a});
        check("slice", [&] { return probe(slice(a, 2, c / 2, c - c / 2)); }, {a});
        auto o = rand_t(rng, {b, dim(rng, 1, 3), c});
        check("concat", [&] { return probe(concat({a, o}, 1)); }, {a, o});
        auto wts = rand_t(rng, {b, r});
        check("weighted_sum", [&] { return probe(weighted_sum(wts, a)); }, {wts, a});
        Rng drng(1);
        check("dropout(p=0)", [&] { return probe(dropout(a, 0.0, drng, Mode::Train)); }, {a});

        const std::size_t nodes = dim(rng, 2, 7);
        auto x = rand_t(rng, {nodes, c});
        std::vector<std::size_t> seg(nodes);
        for (std::size_t i = 0; i < nodes; ++i) seg[i] = i * 2 / nodes;
        check("global_mean_over", [&] { return probe(global_mean_over(x, seg, 2)); }, {x});
        SparseMatrix sp;
        sp.rows = sp.cols = nodes;
        sp.row_ptr.push_back(0);
        for (std::size_t i = 0; i < nodes; ++i) {
            for (std::size_t j = 0; j < nodes; ++j)
                if (i == j || rng.bernoulli(0.3)) {
                    sp.col_idx.push_back(j);
                    sp.values.push_back(rng.uniform(0.1, 1.0));
                }
            sp.row_ptr.push_back(sp.col_idx.size());
        }
        check("spmm", [&] { return probe(spmm(sp, x)); }, {x});
        auto gw = rand_t(rng, {c, 3});
        check("gcn_layer", [&] { return probe(gcn_layer(sp, x, gw)); }, {x, gw});

        const std::size_t k = dim(rng, 2, 4);
        auto logits = rand_t(rng, {b, k});
        std::vector<std::size_t> labels(b);
        for (auto& l : labels) l = rng.below(k);
        check("cross_entropy", [&] { return cross_entropy(softmax(logits, 1), labels); }, {logits});

        const std::size_t cin = dim(rng, 1, 3), len = dim(rng, 5, 12), kw = dim(rng, 1, 5);
        auto cx = rand_t(rng, {b, cin, len});
        auto cw = rand_t(rng, {dim(rng, 1, 3), cin, kw});
        auto cb = rand_t(rng, {cw.dim(0)});
        const std::size_t stride = dim(rng, 1, 2), pad = rng.below(kw);
        check("conv1d", [&] { return probe(conv1d(cx, cw, cb, stride, pad)); }, {cx, cw, cb});
        auto g = rand_t(rng, {cin}, 0.5, 1.5), be = rand_t(rng, {cin});
        BatchNormState ev;
        for (std::size_t i = 0; i < cin; ++i) {
            ev.running_mean.push_back(rng.uniform(-0.5, 0.5));
            ev.running_var.push_back(rng.uniform(0.5, 2.0));
        }
        ev.initialized = true;
        check("batchnorm1d(eval)", [&] { return probe(batchnorm1d(cx, g, be, ev, Mode::Eval)); }, {cx, g, be});
        BatchNormState tr;
        auto bx = rand_t(rng, {b + 1, cin, len});
        check("batchnorm1d(train)", [&] { return probe(batchnorm1d(bx, g, be, tr, Mode::Train)); }, {bx, g, be});
        // spaced distinct values: each window has a unique maximum
        std::vector<double> mv(b * cin * len);
        std::iota(mv.begin(), mv.end(), 0.0);
        rng.shuffle(std::span<double>(mv));
        for (auto& v : mv) v *= 0.1;
        auto mp = Tensor::from({b, cin, len}, mv, true);
        check("maxpool1d", [&] { return probe(maxpool1d(mp, 3, 3, 1)); }, {mp});

        const std::size_t in = dim(rng, 1, 3), hid = dim(rng, 1, 4);
        LstmParams lp{rand_t(rng, {hid + in, hid}), rand_t(rng, {hid + in, hid}), rand_t(rng, {hid + in, hid}),
                      rand_t(rng, {hid + in, hid}), rand_t(rng, {hid}), rand_t(rng, {hid}),
                      rand_t(rng, {hid}), rand_t(rng, {hid})};
        auto lx = rand_t(rng, {b, in}), lh = rand_t(rng, {b, hid}), lc = rand_t(rng, {b, hid});
        check("lstm_cell",
              [&] {
                  auto s = lstm_cell(lx, lh, lc, lp);
                  return add(probe(s.h), scale(probe(s.c), 0.5));
              },
              {lx, lh, lc, lp.w_i, lp.w_o, lp.w_f, lp.w_c, lp.b_i, lp.b_o, lp.b_f, lp.b_c});
        AttentionParams ap{rand_t(rng, {c, 3}), rand_t(rng, {3, 1})};
        check("attention_pool", [&] { return probe(attention_pool(a, ap).pooled); }, {a, ap.w1, ap.w2});
    }

    // micro model end to end
    ModelConfig cfg;
    cfg.n = 4;
    cfg.m = 4;
    cfg.hidden = 8;
    cfg.num_classes = 2;
    cfg.cnn_channels = {4, 8};
    cfg.attn_hidden = 4;
    Rng mrng(22);
    auto p = init_params(cfg, mrng);
    Rng frng(23);
    std::vector<Sample> s;
    for (std::size_t i = 0; i < 2; ++i) {
        Flow f = synth::random_flow(frng, 1 + frng.below(10));
        s.push_back(prepare_sample(build_views(f, cfg.n, cfg.m), i));
    }
    std::vector<const Sample*> ptrs{&s[0], &s[1]};
    auto batch = make_batch(ptrs, cfg);
    Rng d(0);
    check("end-to-end micro model",
          [&] { return cross_entropy(variant_forward(cfg, batch, p, Mode::Eval, d).probs, batch.labels); },
          p.trainable(), 1e-4);

    const double secs = seconds_since(t0);
    double max_err = 0;
    std::string worst_op;
    for (const auto& [op, e] : worst)
        if (e >= max_err) max_err = e, worst_op = op;
    return {max_err <= 1e-4 && secs < 60.0,
            std::to_string(worst.size()) + " checks, max rel err " + fmt("%.2e", max_err) + " (" + worst_op +
                ")" + fmt(", %.1f s (limit 60 s)", secs)};
}

// ---- 5: metrics oracle ----

Outcome metrics_oracle() {
    auto t0 = Clock::now();
    Rng rng(5);
    double worst = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t k = 1 + rng.below(6);
        ConfusionMatrix cm(k, std::vector<std::size_t>(k));
        for (auto& row : cm)
            for (auto& v : row) v = rng.bernoulli(0.25) ? 0 : rng.below(100);
        auto got = metrics_from_confusion(cm);
        // brute force: walk every cell and classify it per class
        double correct = 0, total = 0, mp = 0, mr = 0, mf = 0;
        for (std::size_t c = 0; c < k; ++c) {
            double tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j) {
                    if (i == c && j == c) tp += cm[i][j];
                    else if (j == c) fp += cm[i][j];
                    else if (i == c) fn += cm[i][j];
                }
            const double p = tp + fp > 0 ? tp / (tp + fp) : 0, r = tp + fn > 0 ? tp / (tp + fn) : 0;
            const double f = p + r > 0 ? 2 * p * r / (p + r) : 0;
            mp += p / k;
            mr += r / k;
            mf += f / k;
            correct += cm[c][c];
            for (std::size_t j = 0; j < k; ++j) total += cm[c][j];
            worst = std::max({worst, std::abs(got.per_class[c].precision - p),
                              std::abs(got.per_class[c].recall - r), std::abs(got.per_class[c].f1 - f)});
        }
        const double acc = total > 0 ? correct / total : 0;
        worst = std::max({worst, std::abs(got.accuracy - acc), std::abs(got.macro_precision - mp),
                          std::abs(got.macro_recall - mr), std::abs(got.macro_f1 - mf)});
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 5.0, fmt("max abs diff %.2e, %.3f s (limit 5 s)", worst, secs)};
}

// ---- 6: adjacency oracle ----

Outcome adjacency_oracle() {
    auto t0 = Clock::now();
    Rng rng(6);
    double worst = 0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.below(8);
        std::vector<double> a(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (rng.bernoulli(0.4)) a[i * n + j] = a[j * n + i] = 1.0;
        const Tensor norm = normalize_adjacency(Tensor::from({n, n}, a));
        auto got = norm.data();
        std::vector<double> deg(n, 1.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) deg[i] += a[i * n + j];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double at = a[i * n + j] + (i == j ? 1.0 : 0.0);
                worst = std::max(worst, std::abs(got[i * n + j] - at / std::sqrt(deg[i] * deg[j])));
            }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 5.0, fmt("max abs diff %.2e, %.3f s (limit 5 s)", worst, secs)};
}

// ---- 7-9: behaviour on the synthetic corpus ----

constexpr std::size_t kSeparabilityEpochs = 30;
constexpr std::size_t kComparisonEpochs = 8;

Outcome separability() {
    auto t0 = Clock::now();
    const Dataset& ds = synthetic_set();
    ModelConfig cfg = hidden64();
    cfg.num_classes = ds.classes.size();
    auto parts = split(ds.labels(), SplitSpec{});
    Rng init(0);
    TrainOptions opt;
    opt.epochs = kSeparabilityEpochs;
    auto tr = train(cfg, init_params(cfg, init), select(ds.samples, parts.train), select(ds.samples, parts.val),
                    opt);
    auto rep = evaluate(cfg, tr.params, select(ds.samples, parts.test));
    const double secs = seconds_since(t0);
    return {rep.accuracy >= 0.95 && secs < 600.0,
            fmt("test acc %.4f (>= 0.95) after %g epochs, %.0f s (limit 600 s)", rep.accuracy,
                static_cast<double>(kSeparabilityEpochs), secs) +
                fmt(", best epoch %g", static_cast<double>(tr.best_epoch))};
}

std::vector<Flow> synthetic_flows() { return synth::make_separable_flows(400, 2024); }

Outcome ablation_ordering() {
    auto t0 = Clock::now();
    ExperimentOptions opt;
    opt.model = hidden64();
    opt.train.epochs = kComparisonEpochs;
    opt.seeds = {0, 1, 2};
    auto table = run_ablations(opt, synthetic_flows(), std::vector<Variant>(all_variants().begin(), all_variants().end()));
    std::map<std::string, const CellResult*> by;
    std::string detail;
    bool complete = true;
    for (const auto& row : table.rows) {
        by[row.name] = &row;
        complete = complete && row.runs.size() == 3;
        detail += row.name + "=" + fmt("%.4f", row.macro_f1.mean) + " ";
    }
    const double single = std::max({by["CNN"]->macro_f1.mean, by["LSTM"]->macro_f1.mean, by["GCN"]->macro_f1.mean});
    const double fused = by["MuFF"]->macro_f1.mean;
    return {complete && fused >= single - 0.02,
            "mean macro-F1 over 3 seeds: " + detail + fmt("| MuFF %.4f vs best single %.4f - 0.02, %.0f s", fused,
                                                         single, seconds_since(t0))};
}

Outcome alpha_sweep() {
    auto t0 = Clock::now();
    ExperimentOptions opt;
    opt.model = hidden64();
    opt.train.epochs = kComparisonEpochs;
    opt.seeds = {0};
    std::vector<SweepPoint> grid;
    for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) grid.push_back({40, 16, a});
    auto table = run_sweep(opt, synthetic_flows(), grid);
    double best = 0, at_half = -1;
    std::string detail;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        if (table.rows[i].runs.empty()) return {false, table.rows[i].name + " failed"};
        const double acc = table.rows[i].accuracy.mean;
        best = std::max(best, acc);
        if (grid[i].alpha == 0.5) at_half = acc;
        detail += fmt("a=%g:%.4f ", grid[i].alpha, acc);
    }
    return {at_half >= best - 0.02, detail + fmt("| alpha 0.5 %.4f vs max %.4f, %.0f s", at_half, best, seconds_since(t0))};
}

// ---- 10: graph invariants ----

Outcome graph_invariants() {
    auto t0 = Clock::now();
    Rng rng(10);
    std::size_t bad = 0;
    for (int t = 0; t < 10000; ++t) {
        const std::size_t n = 1 + rng.below(100);
        Flow f = synth::random_flow(rng, 1 + rng.below(150));
        auto g = build_interaction_graph(f, n);
        const std::size_t k = std::min(n, f.packets.size());
        bool ok = g.num_nodes == k && g.num_nodes <= n;
        // layers: maximal same-direction runs covering 0..k-1 in order
        std::size_t next = 0;
        for (std::size_t l = 0; l < g.layers.size() && ok; ++l) {
            for (std::size_t i : g.layers[l]) {
                ok = ok && i == next++ && f.packets[i].dir == f.packets[g.layers[l][0]].dir;
            }
            if (l > 0) ok = ok && f.packets[g.layers[l][0]].dir != f.packets[g.layers[l - 1][0]].dir;
        }
        ok = ok && next == k;
        // connectivity by BFS
        std::vector<std::vector<std::size_t>> adj(g.num_nodes);
        for (auto [i, j] : g.edges) {
            adj[i].push_back(j);
            adj[j].push_back(i);
        }
        std::vector<bool> seen(g.num_nodes, false);
        std::queue<std::size_t> q;
        q.push(0);
        seen[0] = true;
        std::size_t reached = 1;
        while (!q.empty()) {
            auto u = q.front();
            q.pop();
            for (auto v : adj[u])
                if (!seen[v]) seen[v] = true, ++reached, q.push(v);
        }
        ok = ok && reached == g.num_nodes;
        bad += !ok;
    }
    const double secs = seconds_since(t0);
    return {bad == 0 && secs < 10.0, fmt("%g of 10000 graphs violate an invariant, %.2f s (limit 10 s)",
                                         static_cast<double>(bad), secs)};
}

// ---- 11: reproducible checkpoints ----

Outcome bitwise_checkpoints() {
    auto dir = fs::temp_directory_path() / "muff_acceptance_repro";
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_flows_jsonl(synth::make_separable_flows(60, 11), dir / "flows.jsonl");
    std::string ckpt[2];
    for (int i = 0; i < 2; ++i) {
        std::ostringstream out, err;
        const auto run_dir = dir / ("run" + std::to_string(i));
        int code = run_cli({"train", "--flows", (dir / "flows.jsonl").string(), "--out", run_dir.string(), "--seed",
                            "17", "--hidden", "64", "--epochs", "2"},
                           out, err);
        if (code != 0) return {false, "train exited " + std::to_string(code) + ": " + err.str()};
        std::ifstream in(run_dir / "model.ckpt", std::ios::binary);
        ckpt[i].assign(std::istreambuf_iterator<char>(in), {});
    }
    const bool same = !ckpt[0].empty() && ckpt[0] == ckpt[1];
    return {same, fmt("two checkpoints of %g bytes, identical=%g", static_cast<double>(ckpt[0].size()), same)};
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "payload conversion golden", payload_golden},
    {2, "length sequence golden", length_golden},
    {3, "CNN geometry 640->214->72", cnn_geometry},
    {4, "gradient suite", gradient_suite},
    {5, "metrics vs brute force", metrics_oracle},
    {6, "normalized adjacency vs dense", adjacency_oracle},
    {7, "synthetic separability", separability},
    {8, "ablation ordering", ablation_ordering},
    {9, "alpha sweep sanity", alpha_sweep},
    {10, "graph invariants (fuzz)", graph_invariants},
    {11, "bitwise reproducible checkpoints", bitwise_checkpoints},
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
    int failures = 0;
    for (const auto& c : kCriteria) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s  %2d  %-34s %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}
