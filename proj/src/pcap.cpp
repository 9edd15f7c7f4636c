#include "muff/pcap.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <optional>

namespace muff {

namespace {

constexpr std::uint32_t kMagic = 0xa1b2c3d4;
constexpr std::uint32_t kMagicSwapped = 0xd4c3b2a1;
constexpr std::uint32_t kPcapngMagic = 0x0a0d0d0a;
constexpr std::uint32_t kLinkEthernet = 1;
constexpr std::size_t kGlobalHeaderLen = 24;
constexpr std::size_t kRecordHeaderLen = 16;

constexpr std::uint16_t kEtherIpv4 = 0x0800;
constexpr std::uint16_t kEtherVlan = 0x8100;
constexpr std::uint8_t kIpProtoTcp = 6;
constexpr std::uint8_t kIpProtoUdp = 17;

std::uint32_t read_u32(const std::uint8_t* p, bool little) {
    if (little) {
        return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
               std::uint32_t(p[3]) << 24;
    }
    return std::uint32_t(p[3]) | std::uint32_t(p[2]) << 8 | std::uint32_t(p[1]) << 16 |
           std::uint32_t(p[0]) << 24;
}

std::uint16_t be16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] << 8 | p[1]);
}

std::uint32_t be32(const std::uint8_t* p) {
    return read_u32(p, false);
}

// Decodes one Ethernet frame; nullopt when the frame is not IPv4 TCP/UDP or
// its captured bytes do not cover the headers.
std::optional<PacketRecord> decode_frame(std::span<const std::uint8_t> frame) {
    std::size_t off = 14;
    if (frame.size() < off) {
        return std::nullopt;
    }
    std::uint16_t ether_type = be16(frame.data() + 12);
    if (ether_type == kEtherVlan) {
        if (frame.size() < off + 4) {
            return std::nullopt;
        }
        ether_type = be16(frame.data() + 16);
        off += 4;
    }
    if (ether_type != kEtherIpv4 || frame.size() < off + 20) {
        return std::nullopt;
    }
    const std::uint8_t* ip = frame.data() + off;
    if ((ip[0] >> 4) != 4) {
        return std::nullopt;
    }
    const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
    const std::uint16_t total_len = be16(ip + 2);
    const std::uint16_t frag = be16(ip + 6) & 0x1fff;
    const std::uint8_t proto = ip[9];
    if (ihl < 20 || frag != 0 || (proto != kIpProtoTcp && proto != kIpProtoUdp)) {
        return std::nullopt;
    }
    // IP total length bounds the packet (drops Ethernet trailer padding);
    // a zero total length (segmentation offload) falls back to the capture.
    std::size_t ip_end = frame.size();
    if (total_len >= ihl && off + total_len < ip_end) {
        ip_end = off + total_len;
    }
    const std::size_t l4 = off + ihl;
    std::size_t l4_header = 0;
    if (proto == kIpProtoTcp) {
        if (ip_end < l4 + 20) {
            return std::nullopt;
        }
        l4_header = static_cast<std::size_t>(frame[l4 + 12] >> 4) * 4;
        if (l4_header < 20) {
            return std::nullopt;
        }
    } else {
        l4_header = 8;
    }
    if (ip_end < l4 + l4_header) {
        return std::nullopt;
    }

    PacketRecord rec;
    rec.src_ip = Ipv4{be32(ip + 12)};
    rec.dst_ip = Ipv4{be32(ip + 16)};
    rec.src_port = be16(frame.data() + l4);
    rec.dst_port = be16(frame.data() + l4 + 2);
    rec.protocol = proto == kIpProtoTcp ? Protocol::TCP : Protocol::UDP;
    rec.payload.assign(frame.begin() + static_cast<std::ptrdiff_t>(l4 + l4_header),
                       frame.begin() + static_cast<std::ptrdiff_t>(ip_end));
    return rec;
}

}  // namespace

PcapParseResult parse_pcap(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) {
        throw UnsupportedFormatError("file too short for a pcap global header");
    }
    const std::uint32_t magic = read_u32(bytes.data(), true);
    bool little = true;
    if (magic == kMagic) {
        little = true;
    } else if (magic == kMagicSwapped) {
        little = false;
    } else if (magic == kPcapngMagic) {
        throw UnsupportedFormatError("pcapng files are not supported; convert to classic pcap");
    } else {
        throw UnsupportedFormatError("bad pcap magic number");
    }
    if (bytes.size() < kGlobalHeaderLen) {
        throw UnsupportedFormatError("truncated pcap global header");
    }
    const std::uint32_t link = read_u32(bytes.data() + 20, little);
    if (link != kLinkEthernet) {
        throw UnsupportedFormatError("unsupported link type " + std::to_string(link) +
                                     " (only Ethernet is supported)");
    }

    PcapParseResult result;
    std::size_t pos = kGlobalHeaderLen;
    while (pos < bytes.size()) {
        if (bytes.size() - pos < kRecordHeaderLen) {
            throw PartialParseError("truncated packet header at byte offset " + std::to_string(pos),
                                    std::move(result));
        }
        const std::uint8_t* hdr = bytes.data() + pos;
        const std::uint32_t ts_sec = read_u32(hdr, little);
        const std::uint32_t ts_usec = read_u32(hdr + 4, little);
        const std::uint32_t incl_len = read_u32(hdr + 8, little);
        const std::uint32_t orig_len = read_u32(hdr + 12, little);
        pos += kRecordHeaderLen;
        if (bytes.size() - pos < incl_len) {
            throw PartialParseError("truncated packet data at byte offset " + std::to_string(pos),
                                    std::move(result));
        }
        ++result.total_frames;
        auto rec = decode_frame(bytes.subspan(pos, incl_len));
        pos += incl_len;
        if (!rec) {
            ++result.skipped;
            continue;
        }
        rec->ts = static_cast<double>(ts_sec) + static_cast<double>(ts_usec) * 1e-6;
        rec->wire_len = std::max<std::uint32_t>(orig_len, static_cast<std::uint32_t>(rec->payload.size()));
        result.records.push_back(std::move(*rec));
    }
    return result;
}

PcapParseResult parse_pcap(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open pcap file: " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return parse_pcap(std::span<const std::uint8_t>(bytes));
}

}  // namespace muff
