#include "muff/split.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "muff/error.hpp"
#include "muff/rng.hpp"

namespace muff {

std::vector<std::string> SplitSpec::problems() const {
    std::vector<std::string> out;
    for (auto [name, v] : {std::pair{"split.train", train}, {"split.val", val}, {"split.test", test}}) {
        if (!(v >= 0.0 && v <= 1.0)) {
            out.push_back(std::string(name) + " must lie in [0, 1]");
        }
    }
    if (std::abs(train + val + test - 1.0) > 1e-9) {
        out.push_back("split fractions must sum to 1");
    }
    return out;
}

nlohmann::json to_json(const SplitSpec& spec) {
    return {{"train", spec.train},
            {"val", spec.val},
            {"test", spec.test},
            {"seed", spec.seed},
            {"stratify", spec.stratify}};
}

SplitSpec split_spec_from_json(const nlohmann::json& j) {
    try {
        SplitSpec spec;
        spec.train = j.at("train").get<double>();
        spec.val = j.at("val").get<double>();
        spec.test = j.at("test").get<double>();
        spec.seed = j.at("seed").get<std::uint64_t>();
        spec.stratify = j.at("stratify").get<bool>();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed split spec: ") + e.what());
    }
}

SplitResult split(std::span<const std::size_t> labels, const SplitSpec& spec) {
    if (auto p = spec.problems(); !p.empty()) {
        throw ConfigError(std::move(p));
    }
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        groups[spec.stratify ? labels[i] : 0].push_back(i);
    }
    Rng rng(spec.seed);
    SplitResult out;
    for (auto& [label, members] : groups) {
        rng.shuffle(std::span<std::size_t>(members));
        const std::size_t c = members.size();
        std::size_t n_val = static_cast<std::size_t>(std::llround(spec.val * static_cast<double>(c)));
        std::size_t n_test = static_cast<std::size_t>(std::llround(spec.test * static_cast<double>(c)));
        if (c >= 3) {
            n_val = std::clamp<std::size_t>(n_val, 1, c - 2);
            n_test = std::clamp<std::size_t>(n_test, 1, c - 1 - n_val);
        } else {
            n_val = 0;
            n_test = c == 2 ? 1 : 0;
            if (spec.stratify) {
                char buf[128];
                std::snprintf(buf, sizeof buf,
                              "class %zu has only %zu sample(s); it cannot appear in every split",
                              label, c);
                out.warnings.emplace_back(buf);
            }
        }
        const std::size_t n_train = c - n_val - n_test;
        out.train.insert(out.train.end(), members.begin(), members.begin() + n_train);
        out.val.insert(out.val.end(), members.begin() + n_train, members.begin() + n_train + n_val);
        out.test.insert(out.test.end(), members.begin() + n_train + n_val, members.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::string membership_hash(const std::vector<std::string>& ids, std::span<const std::size_t> indices) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](unsigned char c) {
        h ^= c;
        h *= 0x100000001b3ULL;
    };
    for (std::size_t i : indices) {
        for (char c : ids.at(i)) {
            mix(static_cast<unsigned char>(c));
        }
        mix('\n');
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace muff
