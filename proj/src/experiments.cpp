#include "muff/experiments.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "muff/dataset.hpp"
#include "muff/error.hpp"

namespace muff {

namespace {

struct Task {
    std::size_t cell;
    std::size_t seed_index;
};

struct Outcome {
    bool ok = false;
    MetricsReport report;
    std::string error;
};

struct PreparedSplit {
    std::vector<Sample> train, val, test;
};

PreparedSplit apply_split(const Dataset& ds, const SplitResult& parts) {
    return {select(ds.samples, parts.train), select(ds.samples, parts.val),
            select(ds.samples, parts.test)};
}

// Runs every (cell, seed) pair on up to `jobs` threads and fills in the rows.
void execute(std::vector<CellResult>& rows, const std::vector<const PreparedSplit*>& data,
             const ExperimentOptions& options) {
    std::vector<Task> tasks;
    for (std::size_t c = 0; c < rows.size(); ++c) {
        for (std::size_t s = 0; s < options.seeds.size(); ++s) {
            tasks.push_back({c, s});
        }
    }
    std::vector<Outcome> outcomes(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const auto [c, s] = tasks[i];
            const ModelConfig& cfg = rows[c].config;
            const PreparedSplit& d = *data[c];
            try {
                Rng init_rng(options.seeds[s]);
                ModelParams params = init_params(cfg, init_rng);
                TrainOptions topt = options.train;
                topt.seed = options.seeds[s];
                TrainResult tr = train(cfg, params, d.train, d.val, topt);
                outcomes[i].report = evaluate(cfg, tr.params, d.test, topt.batch_size);
                outcomes[i].ok = true;
            } catch (const std::exception& e) {
                outcomes[i].error = "seed " + std::to_string(options.seeds[s]) + ": " + e.what();
            }
        }
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, tasks.size()));
    std::vector<std::thread> pool;
    for (std::size_t j = 1; j < jobs; ++j) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }

    for (std::size_t i = 0; i < tasks.size(); ++i) {
        CellResult& row = rows[tasks[i].cell];
        if (outcomes[i].ok) {
            row.seeds.push_back(options.seeds[tasks[i].seed_index]);
            row.runs.push_back(std::move(outcomes[i].report));
        } else {
            row.errors.push_back(std::move(outcomes[i].error));
        }
    }
    for (auto& row : rows) {
        std::vector<double> acc, p, r, f1;
        for (const auto& m : row.runs) {
            acc.push_back(m.accuracy);
            p.push_back(m.macro_precision);
            r.push_back(m.macro_recall);
            f1.push_back(m.macro_f1);
        }
        row.accuracy = summarize(acc);
        row.macro_precision = summarize(p);
        row.macro_recall = summarize(r);
        row.macro_f1 = summarize(f1);
    }
}

void check_options(const ExperimentOptions& options) {
    if (options.seeds.empty()) {
        throw ConfigError({"at least one seed is required"});
    }
    if (auto p = options.split.problems(); !p.empty()) {
        throw ConfigError(std::move(p));
    }
}

void fill_hashes(ExperimentTable& table, const Dataset& ds, const SplitResult& parts) {
    table.classes = ds.classes;
    table.train_hash = membership_hash(ds.flow_ids, parts.train);
    table.val_hash = membership_hash(ds.flow_ids, parts.val);
    table.test_hash = membership_hash(ds.flow_ids, parts.test);
}

std::string fmt(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

}  // namespace

Summary summarize(const std::vector<double>& values) {
    if (values.empty()) {
        return {std::nan(""), std::nan("")};
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    return {mean, std::sqrt(var)};
}

ExperimentTable run_ablations(const ExperimentOptions& options, const std::vector<Flow>& flows,
                              const std::vector<Variant>& variants) {
    check_options(options);
    if (variants.empty()) {
        throw ConfigError({"no variants selected"});
    }
    Dataset ds = build_dataset(flows, options.model.n, options.model.m);
    SplitResult parts = split(ds.labels(), options.split);
    PreparedSplit data = apply_split(ds, parts);

    ExperimentTable table;
    fill_hashes(table, ds, parts);
    for (Variant v : variants) {
        CellResult row;
        row.name = std::string(variant_name(v));
        row.config = options.model;
        row.config.variant = v;
        row.config.num_classes = ds.classes.size();
        table.rows.push_back(std::move(row));
    }
    std::vector<const PreparedSplit*> per_cell(table.rows.size(), &data);
    execute(table.rows, per_cell, options);
    return table;
}

ExperimentTable run_sweep(const ExperimentOptions& options, const std::vector<Flow>& flows,
                          const std::vector<SweepPoint>& grid) {
    check_options(options);
    if (grid.empty()) {
        throw ConfigError({"sweep grid is empty"});
    }
    ExperimentTable table;
    std::map<std::pair<std::size_t, std::size_t>, PreparedSplit> cache;
    std::vector<const PreparedSplit*> per_cell;
    for (const auto& pt : grid) {
        const auto key = std::pair{pt.n, pt.m};
        CellResult row;
        char name[64];
        std::snprintf(name, sizeof name, "n=%zu m=%zu alpha=%g", pt.n, pt.m, pt.alpha);
        row.name = name;
        row.config = options.model;
        row.config.n = pt.n;
        row.config.m = pt.m;
        row.config.alpha = pt.alpha;
        auto it = cache.find(key);
        if (it == cache.end()) {
            Dataset ds = build_dataset(flows, pt.n, pt.m);
            // Membership depends only on labels and the split seed, so it is
            // the same at every grid point.
            SplitResult parts = split(ds.labels(), options.split);
            if (cache.empty()) {
                fill_hashes(table, ds, parts);
            }
            it = cache.emplace(key, apply_split(ds, parts)).first;
        }
        row.config.num_classes = table.classes.size();
        per_cell.push_back(&it->second);
        table.rows.push_back(std::move(row));
    }
    execute(table.rows, per_cell, options);
    return table;
}

void write_table_csv(const ExperimentTable& table, const std::string& key_column,
                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open for writing: " + path.string());
    }
    out << key_column
        << ",runs,acc,macro_p,macro_r,macro_f1,acc_std,macro_p_std,macro_r_std,macro_f1_std,errors\n";
    for (const auto& row : table.rows) {
        std::string errors;
        for (const auto& e : row.errors) {
            errors += (errors.empty() ? "" : "; ") + e;
        }
        out << csv_quote(row.name) << ',' << row.runs.size() << ',' << fmt(row.accuracy.mean) << ','
            << fmt(row.macro_precision.mean) << ',' << fmt(row.macro_recall.mean) << ','
            << fmt(row.macro_f1.mean) << ',' << fmt(row.accuracy.stddev) << ','
            << fmt(row.macro_precision.stddev) << ',' << fmt(row.macro_recall.stddev) << ','
            << fmt(row.macro_f1.stddev) << ',' << csv_quote(errors) << '\n';
    }
    if (!out) {
        throw FormatError("failed writing " + path.string());
    }
}

nlohmann::json to_json(const ExperimentTable& table) {
    auto summary = [](const Summary& s) {
        return nlohmann::json{{"mean", s.mean}, {"stddev", s.stddev}};
    };
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : table.rows) {
        nlohmann::json runs = nlohmann::json::array();
        for (std::size_t i = 0; i < row.runs.size(); ++i) {
            runs.push_back({{"seed", row.seeds[i]}, {"metrics", to_json(row.runs[i])}});
        }
        rows.push_back({{"name", row.name},
                        {"config", to_json(row.config)},
                        {"runs", std::move(runs)},
                        {"errors", row.errors},
                        {"accuracy", summary(row.accuracy)},
                        {"macro_precision", summary(row.macro_precision)},
                        {"macro_recall", summary(row.macro_recall)},
                        {"macro_f1", summary(row.macro_f1)}});
    }
    return {{"classes", table.classes},
            {"split_hashes",
             {{"train", table.train_hash}, {"val", table.val_hash}, {"test", table.test_hash}}},
            {"rows", std::move(rows)}};
}

}  // namespace muff
