#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "json.hpp"

#include "muff/flow.hpp"

namespace muff {

inline constexpr int kFlowSchemaVersion = 1;

// {"v":1,"flow_id","label","client":"ip:port","server":"ip:port",
//  "protocol":"TCP"|"UDP","packets":[{"ts","dir","len","payload_hex"}]}
nlohmann::json flow_to_json(const Flow& flow);
// Throws FormatError on missing/ill-typed fields or an unknown "v".
Flow flow_from_json(const nlohmann::json& j);

// One object per line. `extend` may add fields to each object before it is
// written (the extract command uses it to attach views).
void write_flows_jsonl(const std::vector<Flow>& flows, const std::filesystem::path& path,
                       const std::function<void(const Flow&, nlohmann::json&)>& extend = {});
std::vector<Flow> read_flows_jsonl(const std::filesystem::path& path);

}  // namespace muff
