#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "muff/packet.hpp"

namespace muff {

// Direction sign: client -> server is -1, server -> client is +1.
enum class Direction : std::int8_t { ClientToServer = -1, ServerToClient = 1 };

inline int sign(Direction d) {
    return static_cast<int>(d);
}

struct FlowPacket {
    double ts = 0.0;
    Direction dir = Direction::ClientToServer;
    std::uint32_t len = 0;
    std::vector<std::uint8_t> payload;

    bool operator==(const FlowPacket&) const = default;
};

// Bidirectional packet group of one 5-tuple. The client is the sender of the
// earliest packet; packets are in timestamp order with capture order on ties.
struct Flow {
    std::string flow_id;
    std::string label = "unlabeled";
    Endpoint client;
    Endpoint server;
    Protocol protocol = Protocol::TCP;
    std::vector<FlowPacket> packets;

    bool operator==(const Flow&) const = default;
};

// First-match-wins label rules loaded from `pattern = label` lines.
// Patterns: `file:<glob>` against the capture's file name, or
// `tuple:<ip>:<port>-<ip>:<port>/<proto>` against the flow's endpoints in
// either orientation; any of ip, port, proto may be `*`.
class LabelManifest {
public:
    struct Rule {
        enum class Kind { File, Tuple } kind = Kind::File;
        std::string pattern;  // glob for File rules
        std::string ip_a, port_a, ip_b, port_b, proto;  // Tuple fields, "*" = any
        std::string label;
    };

    LabelManifest() = default;
    explicit LabelManifest(std::vector<Rule> rules) : rules_(std::move(rules)) {}

    static LabelManifest parse(std::string_view text);
    static LabelManifest load(const std::filesystem::path& path);

    // Label of the first matching rule, if any.
    std::optional<std::string> match(const Flow& flow, std::string_view source_name) const;

    const std::vector<Rule>& rules() const noexcept { return rules_; }

private:
    std::vector<Rule> rules_;
};

// Groups packets by unordered 5-tuple into flows ordered by first appearance.
// source_name (the capture file name) feeds file: rules and the flow ids.
std::vector<Flow> assemble_flows(const std::vector<PacketRecord>& packets,
                                 const LabelManifest& manifest,
                                 std::string_view source_name = {});

// At most the first n packets. n = 0 is an InvalidArgument.
Flow truncate_flow(const Flow& flow, std::size_t n);

}  // namespace muff
