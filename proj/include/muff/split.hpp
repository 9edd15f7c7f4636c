#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace muff {

struct SplitSpec {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
    std::uint64_t seed = 0;
    bool stratify = true;

    std::vector<std::string> problems() const;
};

nlohmann::json to_json(const SplitSpec& spec);
SplitSpec split_spec_from_json(const nlohmann::json& j);

// Sample indices per part, each sorted ascending.
struct SplitResult {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    std::vector<std::string> warnings;
};

// Per group (class when stratified, everything otherwise) the members are
// shuffled with the split seed, then round(val * c) go to val, round(test * c)
// to test and the rest to train. Groups with >= 3 members get at least one
// in every part; smaller groups fill train first, then test, with a warning.
SplitResult split(std::span<const std::size_t> labels, const SplitSpec& spec);

// FNV-1a over the ids of the selected indices, as 16 hex digits.
std::string membership_hash(const std::vector<std::string>& ids, std::span<const std::size_t> indices);

}  // namespace muff
