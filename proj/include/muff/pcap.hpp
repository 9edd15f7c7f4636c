#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "muff/error.hpp"
#include "muff/packet.hpp"

namespace muff {

struct PcapParseResult {
    std::vector<PacketRecord> records;
    // Frames that were read but are not IPv4 TCP/UDP (IPv6, ARP, ICMP,
    // non-first IP fragments, frames too short to hold the headers).
    std::size_t skipped = 0;
    std::size_t total_frames = 0;
};

// Bad magic (including pcapng) or a link type other than Ethernet.
class UnsupportedFormatError : public FormatError {
public:
    using FormatError::FormatError;
};

// The file ended inside a record; carries everything parsed before that point.
class PartialParseError : public FormatError {
public:
    PartialParseError(const std::string& what, PcapParseResult partial)
        : FormatError(what), partial_(std::move(partial)) {}

    const PcapParseResult& partial() const noexcept { return partial_; }

private:
    PcapParseResult partial_;
};

// Classic libpcap files (magic a1b2c3d4 in either byte order, microsecond
// timestamps, Ethernet link type). One 802.1Q VLAN tag is unwrapped.
PcapParseResult parse_pcap(std::span<const std::uint8_t> bytes);
PcapParseResult parse_pcap(const std::filesystem::path& path);

}  // namespace muff
