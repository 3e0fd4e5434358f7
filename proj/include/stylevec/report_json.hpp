#pragma once

// JSON renderings of the analysis and planning reports. These are the
// documents the CLI prints under --json.

#include "json.hpp"

#include "stylevec/analysis.hpp"
#include "stylevec/checkpoint.hpp"
#include "stylevec/lora.hpp"
#include "stylevec/merge.hpp"
#include "stylevec/taskvector.hpp"

namespace stylevec {

inline constexpr int kReportSchemaVersion = 1;

nlohmann::json to_json(const HeaderReport& report);
nlohmann::json to_json(const AlignmentReport& report);
nlohmann::json to_json(const ConsistencyReport& report);
nlohmann::json to_json(const LayerStatsReport& report);
nlohmann::json to_json(const LinearityReport& report);
nlohmann::json to_json(const std::vector<VariationEntry>& ranking);
nlohmann::json to_json(const MergePlan& plan);
nlohmann::json to_json(const ModelTopology& topology);

} // namespace stylevec
