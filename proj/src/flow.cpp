#include "muff/flow.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "muff/error.hpp"

namespace muff {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

bool field_matches(const std::string& pattern, const std::string& value) {
    return pattern == "*" || pattern == value;
}

// "<ip>:<port>" where either part may be "*".
bool split_endpoint(std::string_view text, std::string& ip, std::string& port) {
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos) {
        return false;
    }
    ip = std::string(text.substr(0, colon));
    port = std::string(text.substr(colon + 1));
    if (ip.empty() || port.empty()) {
        return false;
    }
    if (ip != "*" && !Ipv4::parse(ip)) {
        return false;
    }
    if (port != "*") {
        if (port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5 ||
            std::stoul(port) > 65535) {
            return false;
        }
    }
    return true;
}

LabelManifest::Rule parse_rule(const std::string& pattern, const std::string& label,
                               std::size_t line_no) {
    LabelManifest::Rule rule;
    rule.label = label;
    auto bad = [&](const std::string& why) {
        return FormatError("label manifest line " + std::to_string(line_no) + ": " + why);
    };
    if (pattern.rfind("file:", 0) == 0) {
        rule.kind = LabelManifest::Rule::Kind::File;
        rule.pattern = pattern.substr(5);
        if (rule.pattern.empty()) {
            throw bad("empty file glob");
        }
        return rule;
    }
    if (pattern.rfind("tuple:", 0) == 0) {
        rule.kind = LabelManifest::Rule::Kind::Tuple;
        const std::string body = pattern.substr(6);
        const auto slash = body.rfind('/');
        const auto dash = body.find('-');
        if (slash == std::string::npos || dash == std::string::npos || dash > slash) {
            throw bad("tuple pattern must look like <ip>:<port>-<ip>:<port>/<proto>");
        }
        rule.proto = body.substr(slash + 1);
        if (rule.proto != "*" && !parse_protocol(rule.proto)) {
            throw bad("unknown protocol '" + rule.proto + "'");
        }
        if (rule.proto != "*") {
            rule.proto = std::string(protocol_name(*parse_protocol(rule.proto)));
        }
        if (!split_endpoint(std::string_view(body).substr(0, dash), rule.ip_a, rule.port_a) ||
            !split_endpoint(std::string_view(body).substr(dash + 1, slash - dash - 1), rule.ip_b,
                            rule.port_b)) {
            throw bad("malformed endpoint in '" + pattern + "'");
        }
        return rule;
    }
    throw bad("pattern must start with 'file:' or 'tuple:'");
}

bool tuple_side_matches(const LabelManifest::Rule& r, const Endpoint& a, const Endpoint& b) {
    return field_matches(r.ip_a, a.ip.str()) && field_matches(r.port_a, std::to_string(a.port)) &&
           field_matches(r.ip_b, b.ip.str()) && field_matches(r.port_b, std::to_string(b.port));
}

}  // namespace

LabelManifest LabelManifest::parse(std::string_view text) {
    std::vector<Rule> rules;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw FormatError("label manifest line " + std::to_string(line_no) +
                              ": expected 'pattern = label'");
        }
        const std::string pattern = trim(std::string_view(t).substr(0, eq));
        const std::string label = trim(std::string_view(t).substr(eq + 1));
        if (label.empty()) {
            throw FormatError("label manifest line " + std::to_string(line_no) + ": empty label");
        }
        rules.push_back(parse_rule(pattern, label, line_no));
    }
    return LabelManifest(std::move(rules));
}

LabelManifest LabelManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open label manifest: " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::optional<std::string> LabelManifest::match(const Flow& flow,
                                                std::string_view source_name) const {
    const std::string source(source_name);
    for (const auto& rule : rules_) {
        if (rule.kind == Rule::Kind::File) {
            if (!source.empty() && fnmatch(rule.pattern.c_str(), source.c_str(), 0) == 0) {
                return rule.label;
            }
            continue;
        }
        if (!field_matches(rule.proto, std::string(protocol_name(flow.protocol)))) {
            continue;
        }
        if (tuple_side_matches(rule, flow.client, flow.server) ||
            tuple_side_matches(rule, flow.server, flow.client)) {
            return rule.label;
        }
    }
    return std::nullopt;
}

std::vector<Flow> assemble_flows(const std::vector<PacketRecord>& packets,
                                 const LabelManifest& manifest, std::string_view source_name) {
    using Key = std::tuple<Endpoint, Endpoint, Protocol>;
    std::map<Key, std::size_t> index;
    std::vector<std::vector<const PacketRecord*>> groups;
    for (const auto& p : packets) {
        Endpoint a = p.src();
        Endpoint b = p.dst();
        if (b < a) {
            std::swap(a, b);
        }
        auto [it, inserted] = index.try_emplace(Key{a, b, p.protocol}, groups.size());
        if (inserted) {
            groups.emplace_back();
        }
        groups[it->second].push_back(&p);
    }

    std::vector<Flow> flows;
    flows.reserve(groups.size());
    for (auto& group : groups) {
        std::stable_sort(group.begin(), group.end(),
                         [](const PacketRecord* x, const PacketRecord* y) { return x->ts < y->ts; });
        Flow flow;
        flow.client = group.front()->src();
        flow.server = group.front()->dst();
        flow.protocol = group.front()->protocol;
        for (const PacketRecord* p : group) {
            FlowPacket fp;
            fp.ts = p->ts;
            fp.dir = p->src() == flow.client ? Direction::ClientToServer : Direction::ServerToClient;
            fp.len = p->wire_len;
            fp.payload = p->payload;
            flow.packets.push_back(std::move(fp));
        }
        flow.flow_id = (source_name.empty() ? std::string() : std::string(source_name) + "/") +
                       std::string(protocol_name(flow.protocol)) + "/" + flow.client.str() + "-" +
                       flow.server.str();
        flow.label = manifest.match(flow, source_name).value_or("unlabeled");
        flows.push_back(std::move(flow));
    }
    return flows;
}

Flow truncate_flow(const Flow& flow, std::size_t n) {
    if (n == 0) {
        throw InvalidArgument("truncate_flow: n must be >= 1");
    }
    Flow out = flow;
    if (out.packets.size() > n) {
        out.packets.resize(n);
    }
    return out;
}

}  // namespace muff
