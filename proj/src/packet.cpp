#include "muff/packet.hpp"

#include <charconv>

namespace muff {

std::string_view protocol_name(Protocol p) {
    return p == Protocol::TCP ? "TCP" : "UDP";
}

std::optional<Protocol> parse_protocol(std::string_view name) {
    if (name == "TCP" || name == "tcp") {
        return Protocol::TCP;
    }
    if (name == "UDP" || name == "udp") {
        return Protocol::UDP;
    }
    return std::nullopt;
}

std::string Ipv4::str() const {
    return std::to_string((value >> 24) & 0xff) + "." + std::to_string((value >> 16) & 0xff) + "." +
           std::to_string((value >> 8) & 0xff) + "." + std::to_string(value & 0xff);
}

std::optional<Ipv4> Ipv4::parse(std::string_view text) {
    std::uint32_t v = 0;
    const char* p = text.data();
    const char* end = text.data() + text.size();
    for (int octet = 0; octet < 4; ++octet) {
        if (octet > 0) {
            if (p == end || *p != '.') {
                return std::nullopt;
            }
            ++p;
        }
        unsigned part = 0;
        auto [next, ec] = std::from_chars(p, end, part);
        if (ec != std::errc{} || next == p || part > 255 || next - p > 3) {
            return std::nullopt;
        }
        v = (v << 8) | part;
        p = next;
    }
    if (p != end) {
        return std::nullopt;
    }
    return Ipv4{v};
}

std::string Endpoint::str() const {
    return ip.str() + ":" + std::to_string(port);
}

std::optional<Endpoint> Endpoint::parse(std::string_view text) {
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos) {
        return std::nullopt;
    }
    auto ip = Ipv4::parse(text.substr(0, colon));
    const auto port_text = text.substr(colon + 1);
    unsigned port = 0;
    auto [next, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (!ip || ec != std::errc{} || next != port_text.data() + port_text.size() ||
        port_text.empty() || port > 65535) {
        return std::nullopt;
    }
    return Endpoint{*ip, static_cast<std::uint16_t>(port)};
}

std::string to_hex(const std::vector<std::uint8_t>& bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0xf]);
    }
    return out;
}

std::optional<std::vector<std::uint8_t>> from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) {
        return std::nullopt;
    }
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    std::vector<std::uint8_t> out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const int hi = nibble(hex[2 * i]);
        const int lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) {
            return std::nullopt;
        }
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

}  // namespace muff
