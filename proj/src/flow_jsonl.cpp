#include "muff/flow_jsonl.hpp"

#include <fstream>

#include "muff/error.hpp"

namespace muff {

nlohmann::json flow_to_json(const Flow& flow) {
    nlohmann::json packets = nlohmann::json::array();
    for (const auto& p : flow.packets) {
        packets.push_back({{"ts", p.ts},
                           {"dir", sign(p.dir)},
                           {"len", p.len},
                           {"payload_hex", to_hex(p.payload)}});
    }
    return {{"v", kFlowSchemaVersion},
            {"flow_id", flow.flow_id},
            {"label", flow.label},
            {"client", flow.client.str()},
            {"server", flow.server.str()},
            {"protocol", std::string(protocol_name(flow.protocol))},
            {"packets", std::move(packets)}};
}

Flow flow_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw FormatError("flow record is not a JSON object");
    }
    if (!j.contains("v") || !j.at("v").is_number_integer()) {
        throw FormatError("flow record has no schema version");
    }
    if (j.at("v").get<int>() != kFlowSchemaVersion) {
        throw FormatError("unknown flow schema version " + j.at("v").dump());
    }
    try {
        Flow flow;
        flow.flow_id = j.at("flow_id").get<std::string>();
        flow.label = j.at("label").get<std::string>();
        auto client = Endpoint::parse(j.at("client").get<std::string>());
        auto server = Endpoint::parse(j.at("server").get<std::string>());
        auto proto = parse_protocol(j.at("protocol").get<std::string>());
        if (!client || !server) {
            throw FormatError("malformed endpoint");
        }
        if (!proto) {
            throw FormatError("unknown protocol " + j.at("protocol").dump());
        }
        flow.client = *client;
        flow.server = *server;
        flow.protocol = *proto;
        for (const auto& pj : j.at("packets")) {
            FlowPacket p;
            p.ts = pj.at("ts").get<double>();
            const int dir = pj.at("dir").get<int>();
            if (dir != -1 && dir != 1) {
                throw FormatError("dir must be -1 or 1, got " + std::to_string(dir));
            }
            p.dir = static_cast<Direction>(dir);
            const auto len = pj.at("len").get<std::int64_t>();
            if (len < 0 || len > UINT32_MAX) {
                throw FormatError("len out of range");
            }
            p.len = static_cast<std::uint32_t>(len);
            auto payload = from_hex(pj.at("payload_hex").get<std::string>());
            if (!payload) {
                throw FormatError("payload_hex is not valid hex");
            }
            p.payload = std::move(*payload);
            if (p.payload.size() > p.len) {
                throw FormatError("payload longer than packet length");
            }
            flow.packets.push_back(std::move(p));
        }
        return flow;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(e.what());
    }
}

void write_flows_jsonl(const std::vector<Flow>& flows, const std::filesystem::path& path,
                       const std::function<void(const Flow&, nlohmann::json&)>& extend) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open for writing: " + path.string());
    }
    for (const auto& flow : flows) {
        auto j = flow_to_json(flow);
        if (extend) {
            extend(flow, j);
        }
        out << j.dump() << '\n';
    }
    if (!out) {
        throw FormatError("failed writing " + path.string());
    }
}

std::vector<Flow> read_flows_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open flows file: " + path.string());
    }
    std::vector<Flow> flows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            flows.push_back(flow_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return flows;
}

}  // namespace muff
