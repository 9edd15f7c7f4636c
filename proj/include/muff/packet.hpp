#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace muff {

enum class Protocol : std::uint8_t { TCP, UDP };

std::string_view protocol_name(Protocol p);
std::optional<Protocol> parse_protocol(std::string_view name);

// IPv4 address in host byte order.
struct Ipv4 {
    std::uint32_t value = 0;

    std::string str() const;
    static std::optional<Ipv4> parse(std::string_view text);

    auto operator<=>(const Ipv4&) const = default;
};

struct Endpoint {
    Ipv4 ip;
    std::uint16_t port = 0;

    std::string str() const;  // "a.b.c.d:port"
    static std::optional<Endpoint> parse(std::string_view text);

    auto operator<=>(const Endpoint&) const = default;
};

// One captured IPv4 TCP/UDP packet. wire_len is the original frame length
// from the capture record; payload is the captured transport payload.
struct PacketRecord {
    double ts = 0.0;
    Ipv4 src_ip;
    Ipv4 dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    Protocol protocol = Protocol::TCP;
    std::uint32_t wire_len = 0;
    std::vector<std::uint8_t> payload;

    Endpoint src() const { return {src_ip, src_port}; }
    Endpoint dst() const { return {dst_ip, dst_port}; }

    bool operator==(const PacketRecord&) const = default;
};

std::string to_hex(const std::vector<std::uint8_t>& bytes);
// Lowercase or uppercase hex; nullopt on odd length or non-hex characters.
std::optional<std::vector<std::uint8_t>> from_hex(std::string_view hex);

}  // namespace muff
