#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "muff/tensor.hpp"

namespace muff {

inline constexpr const char* kCheckpointFormat = "muffckpt/1";

struct NamedArray {
    Shape shape;
    std::vector<double> data;
};

// Flat binary container of named float64 arrays.
//
// Layout: the ASCII line "muffckpt/1\n", an 8-byte little-endian header
// length, a JSON header {"format", "meta", "arrays": [{"name", "shape",
// "offset", "count"}]}, then the concatenated little-endian float64 payload.
// Offsets are in bytes from the start of the payload. Arrays are written in
// name order so identical content gives identical bytes.
struct Checkpoint {
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, NamedArray> arrays;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace muff
