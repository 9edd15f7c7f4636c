#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "muff/flow.hpp"
#include "muff/metrics.hpp"
#include "muff/model.hpp"
#include "muff/split.hpp"
#include "muff/trainer.hpp"

namespace muff {

struct ExperimentOptions {
    ModelConfig model;  // num_classes is taken from the data
    SplitSpec split;
    TrainOptions train;  // seed is replaced per run
    std::vector<std::uint64_t> seeds{0};
    std::size_t jobs = 1;
};

// mean and population standard deviation
struct Summary {
    double mean = 0.0;
    double stddev = 0.0;
};

Summary summarize(const std::vector<double>& values);

// One table row: a variant or a grid point, trained once per seed.
struct CellResult {
    std::string name;
    ModelConfig config;
    std::vector<std::uint64_t> seeds;  // seeds that finished
    std::vector<MetricsReport> runs;
    std::vector<std::string> errors;   // one per failed seed
    Summary accuracy, macro_precision, macro_recall, macro_f1;
};

struct SweepPoint {
    std::size_t n = 40;
    std::size_t m = 16;
    double alpha = 0.5;
};

struct ExperimentTable {
    std::vector<CellResult> rows;
    std::vector<std::string> classes;
    // membership hashes of the shared split
    std::string train_hash, val_hash, test_hash;
};

// Every cell trains on the same split of the same flows; a failing cell is
// recorded and the others carry on.
ExperimentTable run_ablations(const ExperimentOptions& options, const std::vector<Flow>& flows,
                              const std::vector<Variant>& variants);

// One cell per grid point with the configured variant. Views are rebuilt for
// each distinct (n, m).
ExperimentTable run_sweep(const ExperimentOptions& options, const std::vector<Flow>& flows,
                          const std::vector<SweepPoint>& grid);

// Columns: key, runs, acc, macro_p, macro_r, macro_f1, the four stddevs, errors.
void write_table_csv(const ExperimentTable& table, const std::string& key_column,
                     const std::filesystem::path& path);

nlohmann::json to_json(const ExperimentTable& table);

}  // namespace muff
