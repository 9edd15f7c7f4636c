#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "muff/error.hpp"
#include "muff/flow.hpp"
#include "muff/rng.hpp"

using namespace muff;

namespace {

PacketRecord pkt(double ts, std::uint32_t src, std::uint16_t sport, std::uint32_t dst, std::uint16_t dport,
                 Protocol proto = Protocol::TCP, std::uint32_t len = 60) {
    return {ts, Ipv4{src}, Ipv4{dst}, sport, dport, proto, len, {}};
}

const std::uint32_t A = 0x0a000001, B = 0x0a000002, C = 0x0a000003;

}  // namespace

TEST(Assemble, EmptyInput) {
    EXPECT_TRUE(assemble_flows({}, LabelManifest{}).empty());
}

TEST(Assemble, ThreePacketsOneFlow) {
    auto flows = assemble_flows({pkt(1, A, 1000, B, 80), pkt(2, B, 80, A, 1000), pkt(3, A, 1000, B, 80)},
                                LabelManifest{});
    ASSERT_EQ(flows.size(), 1u);
    const Flow& f = flows[0];
    EXPECT_EQ(f.client, (Endpoint{Ipv4{A}, 1000}));
    EXPECT_EQ(f.server, (Endpoint{Ipv4{B}, 80}));
    ASSERT_EQ(f.packets.size(), 3u);
    EXPECT_EQ(sign(f.packets[0].dir), -1);
    EXPECT_EQ(sign(f.packets[1].dir), 1);
    EXPECT_EQ(sign(f.packets[2].dir), -1);
    EXPECT_EQ(f.label, "unlabeled");
}

TEST(Assemble, InterleavedTuplesSplit) {
    auto flows = assemble_flows({pkt(1, A, 1000, B, 80), pkt(2, C, 5000, B, 53, Protocol::UDP),
                                 pkt(3, B, 80, A, 1000), pkt(4, B, 53, C, 5000, Protocol::UDP),
                                 pkt(5, A, 1000, B, 80)},
                                LabelManifest{});
    ASSERT_EQ(flows.size(), 2u);
    EXPECT_EQ(flows[0].packets.size(), 3u);
    EXPECT_EQ(flows[1].packets.size(), 2u);
    EXPECT_EQ(flows[1].protocol, Protocol::UDP);
    for (const auto& f : flows) {
        EXPECT_TRUE(std::is_sorted(f.packets.begin(), f.packets.end(),
                                   [](const auto& x, const auto& y) { return x.ts < y.ts; }));
    }
}

TEST(Assemble, SamePortsDifferentProtocolAreDifferentFlows) {
    auto flows = assemble_flows({pkt(1, A, 1, B, 2, Protocol::TCP), pkt(2, A, 1, B, 2, Protocol::UDP)},
                                LabelManifest{});
    EXPECT_EQ(flows.size(), 2u);
}

TEST(Assemble, TiesKeepCaptureOrder) {
    auto p1 = pkt(5, A, 1, B, 2, Protocol::TCP, 100);
    auto p2 = pkt(5, B, 2, A, 1, Protocol::TCP, 200);
    auto flows = assemble_flows({p1, p2}, LabelManifest{});
    ASSERT_EQ(flows[0].packets.size(), 2u);
    EXPECT_EQ(flows[0].packets[0].len, 100u);
    EXPECT_EQ(flows[0].client, (Endpoint{Ipv4{A}, 1}));
}

TEST(Assemble, PropertyNoLossAndDirectionOracle) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<PacketRecord> packets;
        const std::size_t count = rng.below(60);
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint32_t hosts[] = {A, B, C};
            auto s = hosts[rng.below(3)];
            auto d = hosts[rng.below(3)];
            auto sp = static_cast<std::uint16_t>(1 + rng.below(3));
            auto dp = static_cast<std::uint16_t>(1 + rng.below(3));
            auto p = pkt(static_cast<double>(i), s, sp, d, dp,
                         rng.bernoulli(0.5) ? Protocol::TCP : Protocol::UDP,
                         static_cast<std::uint32_t>(i));  // len = index, a unique tag
            packets.push_back(p);
        }
        auto flows = assemble_flows(packets, LabelManifest{});
        std::vector<std::uint32_t> seen;
        for (const auto& f : flows) {
            // client is the sender of the flow's earliest packet
            const auto& first = packets[f.packets.front().len];
            EXPECT_EQ(f.client, first.src());
            for (const auto& fp : f.packets) {
                const auto& orig = packets[fp.len];
                const bool from_client = orig.src() == f.client && orig.dst() == f.server;
                const bool from_server = orig.src() == f.server && orig.dst() == f.client;
                EXPECT_TRUE(from_client || from_server);
                // a host talking to itself on one port pair counts as client->server
                EXPECT_EQ(fp.dir, from_client ? Direction::ClientToServer : Direction::ServerToClient);
                seen.push_back(fp.len);
            }
        }
        std::sort(seen.begin(), seen.end());
        ASSERT_EQ(seen.size(), packets.size());
        for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i], i);

        // Stable re-chunking: assembling in two halves keeps every client.
        const std::size_t half = count / 2;
        std::vector<PacketRecord> first(packets.begin(), packets.begin() + half);
        std::vector<PacketRecord> rejoined = first;
        rejoined.insert(rejoined.end(), packets.begin() + half, packets.end());
        EXPECT_EQ(assemble_flows(rejoined, LabelManifest{}), flows);
    }
}

TEST(Truncate, Examples) {
    Flow f;
    for (int i = 0; i < 100; ++i) {
        f.packets.push_back({static_cast<double>(i), Direction::ClientToServer, static_cast<std::uint32_t>(i), {}});
    }
    auto t = truncate_flow(f, 40);
    ASSERT_EQ(t.packets.size(), 40u);
    EXPECT_EQ(t.packets.back().len, 39u);
    Flow small = f;
    small.packets.resize(5);
    EXPECT_EQ(truncate_flow(small, 40), small);
    auto one = truncate_flow(f, 1);
    ASSERT_EQ(one.packets.size(), 1u);
    EXPECT_EQ(one.packets[0].len, 0u);
    EXPECT_THROW(truncate_flow(f, 0), InvalidArgument);
}

TEST(Manifest, FirstMatchWins) {
    auto m = LabelManifest::parse(
        "# labels\n"
        "tuple:10.0.0.1:1000-10.0.0.2:80/TCP = web\n"
        "file:*botnet*.pcap = botnet\n"
        "file:*.pcap = benign\n");
    auto flows = assemble_flows({pkt(1, A, 1000, B, 80), pkt(2, C, 9, B, 9)}, m, "day1-botnet-3.pcap");
    ASSERT_EQ(flows.size(), 2u);
    EXPECT_EQ(flows[0].label, "web");
    EXPECT_EQ(flows[1].label, "botnet");
    auto other = assemble_flows({pkt(1, C, 9, B, 9)}, m, "normal.pcap");
    EXPECT_EQ(other[0].label, "benign");
}

TEST(Manifest, TupleMatchesEitherOrientationAndWildcards) {
    auto m = LabelManifest::parse("tuple:10.0.0.2:80-*:*/TCP = server80\n");
    auto flows = assemble_flows({pkt(1, A, 1000, B, 80)}, m);
    EXPECT_EQ(flows[0].label, "server80");
    auto udp = assemble_flows({pkt(1, A, 1000, B, 80, Protocol::UDP)}, m);
    EXPECT_EQ(udp[0].label, "unlabeled");
}

TEST(Manifest, MalformedLineNamed) {
    try {
        LabelManifest::parse("file:*.pcap = a\nbogus line\n");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
}
