#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "muff/experiments.hpp"
#include "muff/model.hpp"
#include "muff/split.hpp"
#include "muff/trainer.hpp"

namespace muff {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitFormat = 3,
    kExitNumerical = 4,
};

// Flat "section.key" -> raw value settings, as found in a config file or
// collected from flags.
using Settings = std::map<std::string, std::string>;

// key=value lines, '#' starts a comment, blank lines ignored. Malformed lines
// and unknown keys are reported together as a ConfigError.
Settings parse_config_text(std::string_view text);
Settings load_config_file(const std::filesystem::path& path);

// Every key a config file may set.
const std::vector<std::string>& known_config_keys();

struct RunConfig {
    ModelConfig model;
    SplitSpec split;
    TrainOptions train;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds;  // ablate/sweep; defaults to {seed}
    std::vector<Variant> variants;     // ablate; defaults to all seven
    std::size_t jobs = 1;
    std::vector<std::size_t> sweep_n;
    std::vector<std::size_t> sweep_m;
    std::vector<double> sweep_alpha;

    std::vector<std::filesystem::path> inputs;  // pcaps for extract
    std::filesystem::path flows;
    std::filesystem::path manifest;
    std::filesystem::path out;
    std::filesystem::path checkpoint;
    bool views = false;
    std::string part = "test";  // eval: train|val|test|all
};

// Applies settings over the defaults. `env_seed` (MUFF_SEED) is used when
// run.seed is absent. All problems are collected into one ConfigError.
RunConfig resolve_config(const Settings& settings, const char* env_seed = nullptr);

nlohmann::json to_json(const RunConfig& cfg);

std::vector<SweepPoint> sweep_grid(const RunConfig& cfg);

// Lowercase hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

// Entry point behind the muff executable; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace muff
