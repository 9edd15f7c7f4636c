#include "muff/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>

#include "muff/error.hpp"

namespace muff {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    }
    return v;
}

}  // namespace

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::json header;
    header["format"] = kCheckpointFormat;
    header["meta"] = ckpt.meta;
    header["arrays"] = nlohmann::json::array();
    std::string payload;
    for (const auto& [name, arr] : ckpt.arrays) {
        if (arr.data.size() != shape_numel(arr.shape)) {
            throw DimensionError("checkpoint array '" + name + "' has " +
                                 std::to_string(arr.data.size()) + " values for shape " +
                                 shape_str(arr.shape));
        }
        header["arrays"].push_back({{"name", name},
                                    {"shape", arr.shape},
                                    {"offset", payload.size()},
                                    {"count", arr.data.size()}});
        for (double v : arr.data) {
            put_u64(payload, std::bit_cast<std::uint64_t>(v));
        }
    }
    const std::string header_text = header.dump();

    std::string bytes = std::string(kCheckpointFormat) + "\n";
    put_u64(bytes, header_text.size());
    bytes += header_text;
    bytes += payload;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open checkpoint for writing: " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError("failed writing checkpoint: " + path.string());
    }
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open checkpoint: " + path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string magic = std::string(kCheckpointFormat) + "\n";
    if (bytes.compare(0, magic.size(), magic) != 0) {
        throw FormatError("not a muffckpt/1 checkpoint: " + path.string());
    }
    std::size_t pos = magic.size();
    if (bytes.size() < pos + 8) {
        throw FormatError("truncated checkpoint header: " + path.string());
    }
    const std::uint64_t header_len = get_u64(bytes, pos);
    pos += 8;
    if (bytes.size() < pos + header_len) {
        throw FormatError("truncated checkpoint header: " + path.string());
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(pos, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed checkpoint header: " + std::string(e.what()));
    }
    pos += header_len;
    if (header.value("format", "") != kCheckpointFormat) {
        throw FormatError("unsupported checkpoint format in " + path.string());
    }

    Checkpoint ckpt;
    ckpt.meta = header.value("meta", nlohmann::json::object());
    const std::size_t payload_size = bytes.size() - pos;
    try {
        for (const auto& entry : header.at("arrays")) {
            NamedArray arr;
            arr.shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto count = entry.at("count").get<std::size_t>();
            if (count != shape_numel(arr.shape) || offset + count * 8 > payload_size) {
                throw FormatError("checkpoint array '" + entry.at("name").get<std::string>() +
                                  "' is inconsistent with the payload");
            }
            arr.data.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                arr.data[i] = std::bit_cast<double>(get_u64(bytes, pos + offset + 8 * i));
            }
            ckpt.arrays.emplace(entry.at("name").get<std::string>(), std::move(arr));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed checkpoint header: " + std::string(e.what()));
    }
    return ckpt;
}

}  // namespace muff
