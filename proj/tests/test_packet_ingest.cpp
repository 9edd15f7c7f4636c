#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "muff/flow_jsonl.hpp"
#include "muff/pcap.hpp"
#include "synthetic.hpp"

using namespace muff;
namespace fs = std::filesystem;

namespace {

std::uint32_t ip(int a, int b, int c, int d) {
    return static_cast<std::uint32_t>(a << 24 | b << 16 | c << 8 | d);
}

// Global header (LE), one record: Ethernet + IPv4 + UDP 1234 -> 53 carrying DEADBEEF.
std::vector<std::uint8_t> deadbeef_pcap() {
    return {
        0xd4, 0xc3, 0xb2, 0xa1, 0x02, 0x00, 0x04, 0x00,  // magic, v2.4
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,  // thiszone, sigfigs
        0xff, 0xff, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00,  // snaplen, linktype 1
        0x10, 0x00, 0x00, 0x00, 0x20, 0xa1, 0x07, 0x00,  // ts 16 s, 500000 us
        0x2e, 0x00, 0x00, 0x00, 0x2e, 0x00, 0x00, 0x00,  // caplen 46, len 46
        0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 0x08, 0x00,
        0x45, 0x00, 0x00, 0x20, 0x00, 0x00, 0x00, 0x00, 0x40, 0x11, 0x00, 0x00,
        10, 0, 0, 1, 10, 0, 0, 2,
        0x04, 0xd2, 0x00, 0x35, 0x00, 0x0c, 0x00, 0x00,
        0xde, 0xad, 0xbe, 0xef,
    };
}

std::vector<std::uint8_t> byteswap_headers(std::vector<std::uint8_t> b) {
    auto swap4 = [&](std::size_t o) { std::swap(b[o], b[o + 3]); std::swap(b[o + 1], b[o + 2]); };
    auto swap2 = [&](std::size_t o) { std::swap(b[o], b[o + 1]); };
    swap4(0); swap2(4); swap2(6); swap4(8); swap4(12); swap4(16); swap4(20);
    std::size_t off = 24;
    while (off + 16 <= b.size()) {
        std::uint32_t caplen = b[off + 8] | b[off + 9] << 8 | b[off + 10] << 16 | b[off + 11] << 24;
        for (std::size_t k = 0; k < 16; k += 4) swap4(off + k);
        off += 16 + caplen;
    }
    return b;
}

fs::path temp_path(const std::string& name) {
    return fs::temp_directory_path() / ("muff_ingest_" + name);
}

}  // namespace

TEST(Pcap, HeaderOnlyIsEmpty) {
    auto bytes = deadbeef_pcap();
    bytes.resize(24);
    auto r = parse_pcap(bytes);
    EXPECT_TRUE(r.records.empty());
    EXPECT_EQ(r.skipped, 0u);
    EXPECT_EQ(r.total_frames, 0u);
}

TEST(Pcap, HandAssembledUdpDeadbeef) {
    auto r = parse_pcap(deadbeef_pcap());
    ASSERT_EQ(r.records.size(), 1u);
    const auto& p = r.records[0];
    EXPECT_EQ(p.protocol, Protocol::UDP);
    EXPECT_EQ(p.payload, (std::vector<std::uint8_t>{0xde, 0xad, 0xbe, 0xef}));
    EXPECT_EQ(p.src_ip.value, ip(10, 0, 0, 1));
    EXPECT_EQ(p.dst_ip.value, ip(10, 0, 0, 2));
    EXPECT_EQ(p.src_port, 1234);
    EXPECT_EQ(p.dst_port, 53);
    EXPECT_EQ(p.wire_len, 46u);
    EXPECT_DOUBLE_EQ(p.ts, 16.5);
}

TEST(Pcap, ByteSwappedMagicGivesSameRecord) {
    auto le = parse_pcap(deadbeef_pcap());
    auto be = parse_pcap(byteswap_headers(deadbeef_pcap()));
    EXPECT_EQ(le.records, be.records);
}

TEST(Pcap, BadMagicAndPcapng) {
    auto bytes = deadbeef_pcap();
    bytes[0] = 0x00;
    EXPECT_THROW(parse_pcap(bytes), UnsupportedFormatError);
    std::vector<std::uint8_t> ng{0x0a, 0x0d, 0x0d, 0x0a, 0x1c, 0, 0, 0, 0x4d, 0x3c, 0x2b, 0x1a};
    ng.resize(28, 0);
    EXPECT_THROW(parse_pcap(ng), UnsupportedFormatError);
}

TEST(Pcap, NonEthernetLinkRejected) {
    auto bytes = deadbeef_pcap();
    bytes[20] = 101;  // raw IP
    EXPECT_THROW(parse_pcap(bytes), UnsupportedFormatError);
}

TEST(Pcap, TruncatedRecordCarriesPartialResult) {
    auto one = deadbeef_pcap();
    auto bytes = one;
    bytes.insert(bytes.end(), one.begin() + 24, one.begin() + 24 + 10);  // half a record header
    try {
        parse_pcap(bytes);
        FAIL() << "expected PartialParseError";
    } catch (const PartialParseError& e) {
        EXPECT_EQ(e.partial().records.size(), 1u);
    }
}

TEST(Pcap, SkipsNonIpv4AndCountsThem) {
    std::vector<PacketRecord> recs(3);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        recs[i] = {static_cast<double>(i), Ipv4{ip(1, 1, 1, 1)}, Ipv4{ip(2, 2, 2, 2)}, 10, 20,
                   i == 1 ? Protocol::UDP : Protocol::TCP, 0, {1, 2, 3}};
    }
    auto bytes = synth::make_pcap(recs);
    // Turn the second frame's ethertype into IPv6.
    std::size_t off = 24 + 16 + (14 + 20 + 20 + 3) + 16;
    bytes[off + 12] = 0x86;
    bytes[off + 13] = 0xdd;
    auto r = parse_pcap(bytes);
    EXPECT_EQ(r.records.size(), 2u);
    EXPECT_EQ(r.skipped, 1u);
    EXPECT_EQ(r.records.size() + r.skipped, r.total_frames);
}

TEST(Pcap, VlanTagUnwrapped) {
    auto bytes = deadbeef_pcap();
    std::vector<std::uint8_t> tag{0x81, 0x00, 0x00, 0x64};
    bytes.insert(bytes.begin() + 24 + 16 + 12, tag.begin(), tag.end());
    bytes[24 + 8] += 4;
    bytes[24 + 12] += 4;
    auto r = parse_pcap(bytes);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].payload, (std::vector<std::uint8_t>{0xde, 0xad, 0xbe, 0xef}));
}

TEST(Pcap, TruncatedCaptureKeepsPayloadPrefix) {
    auto bytes = deadbeef_pcap();
    bytes.resize(bytes.size() - 2);
    bytes[24 + 8] -= 2;  // caplen 44, orig len stays 46
    auto r = parse_pcap(bytes);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].payload, (std::vector<std::uint8_t>{0xde, 0xad}));
    EXPECT_EQ(r.records[0].wire_len, 46u);
}

TEST(Pcap, TcpDataOffsetHonoured) {
    PacketRecord rec{1.25, Ipv4{ip(1, 2, 3, 4)}, Ipv4{ip(5, 6, 7, 8)}, 40000, 443, Protocol::TCP, 0,
                     {0x16, 0x03, 0x01}};
    auto bytes = synth::make_pcap({rec});
    auto r = parse_pcap(bytes);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].payload, rec.payload);
    EXPECT_EQ(r.records[0].protocol, Protocol::TCP);
}

TEST(Pcap, RandomFilesRoundTripAndAreDeterministic) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<PacketRecord> recs;
        const std::size_t count = rng.below(20);
        for (std::size_t i = 0; i < count; ++i) {
            PacketRecord p;
            p.ts = static_cast<double>(1000 + i) + static_cast<double>(rng.below(1000000)) * 1e-6;
            p.src_ip.value = static_cast<std::uint32_t>(rng.next_u64());
            p.dst_ip.value = static_cast<std::uint32_t>(rng.next_u64());
            p.src_port = static_cast<std::uint16_t>(rng.below(65536));
            p.dst_port = static_cast<std::uint16_t>(rng.below(65536));
            p.protocol = rng.bernoulli(0.5) ? Protocol::TCP : Protocol::UDP;
            p.payload.resize(rng.below(100));
            for (auto& b : p.payload) b = static_cast<std::uint8_t>(rng.below(256));
            recs.push_back(p);
        }
        const bool swapped = trial % 2 == 1;
        auto bytes = synth::make_pcap(recs, swapped);
        auto a = parse_pcap(bytes);
        auto b = parse_pcap(bytes);
        EXPECT_EQ(a.records, b.records);
        ASSERT_EQ(a.records.size(), recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            EXPECT_EQ(a.records[i].payload, recs[i].payload);
            EXPECT_EQ(a.records[i].src_port, recs[i].src_port);
            EXPECT_NEAR(a.records[i].ts, recs[i].ts, 1e-6);
            EXPECT_GE(a.records[i].wire_len, a.records[i].payload.size());
        }
    }
}

TEST(Pcap, ReadsFromDisk) {
    auto path = temp_path("deadbeef.pcap");
    {
        auto bytes = deadbeef_pcap();
        std::ofstream out(path, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    EXPECT_EQ(parse_pcap(path).records.size(), 1u);
    fs::remove(path);
    EXPECT_THROW(parse_pcap(path), FormatError);
}

TEST(Hex, LowercaseAndRejectsJunk) {
    EXPECT_EQ(to_hex({0xde, 0xad, 0x00, 0x0f}), "dead000f");
    EXPECT_EQ(from_hex("DEad"), (std::vector<std::uint8_t>{0xde, 0xad}));
    EXPECT_FALSE(from_hex("abc").has_value());
    EXPECT_FALSE(from_hex("zz").has_value());
    EXPECT_EQ(from_hex(""), std::vector<std::uint8_t>{});
}

TEST(FlowsJsonl, EmptyRoundTrip) {
    auto path = temp_path("empty.jsonl");
    write_flows_jsonl({}, path);
    EXPECT_EQ(fs::file_size(path), 0u);
    EXPECT_TRUE(read_flows_jsonl(path).empty());
    fs::remove(path);
}

TEST(FlowsJsonl, TwoPacketRoundTrip) {
    Flow f;
    f.flow_id = "x.pcap/TCP/10.0.0.1:1000-10.0.0.2:80";
    f.label = "benign";
    f.client = {Ipv4{ip(10, 0, 0, 1)}, 1000};
    f.server = {Ipv4{ip(10, 0, 0, 2)}, 80};
    f.packets = {{1.5, Direction::ClientToServer, 60, {0x47, 0x45}},
                 {1.75, Direction::ServerToClient, 1500, {}}};
    auto path = temp_path("two.jsonl");
    write_flows_jsonl({f}, path);
    auto back = read_flows_jsonl(path);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0], f);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_NE(line.find("\"payload_hex\":\"4745\""), std::string::npos);
    EXPECT_NE(line.find("\"dir\":-1"), std::string::npos);
    fs::remove(path);
}

TEST(FlowsJsonl, RandomFlowsRoundTrip) {
    Rng rng(11);
    std::vector<Flow> flows;
    for (int i = 0; i < 200; ++i) {
        flows.push_back(synth::random_flow(rng, rng.below(12)));
    }
    auto path = temp_path("random.jsonl");
    write_flows_jsonl(flows, path);
    EXPECT_EQ(read_flows_jsonl(path), flows);
    fs::remove(path);
}

TEST(FlowsJsonl, ErrorsNameTheLine) {
    auto path = temp_path("bad.jsonl");
    Flow f;
    f.flow_id = "a";
    f.client = {Ipv4{1}, 1};
    f.server = {Ipv4{2}, 2};
    write_flows_jsonl({f}, path);
    {
        std::ofstream out(path, std::ios::app);
        out << "{not json\n";
    }
    try {
        read_flows_jsonl(path);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
    {
        std::ofstream out(path, std::ios::trunc);
        auto j = flow_to_json(f);
        j["v"] = 2;
        out << j.dump() << '\n';
    }
    try {
        read_flows_jsonl(path);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
    }
    fs::remove(path);
}

TEST(FlowsJsonl, RejectsBadDirection) {
    Flow f;
    f.flow_id = "a";
    f.packets = {{0.0, Direction::ClientToServer, 1, {}}};
    auto j = flow_to_json(f);
    j["packets"][0]["dir"] = 0;
    EXPECT_THROW(flow_from_json(j), FormatError);
}
