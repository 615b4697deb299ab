#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "wakeforge/ga.hpp"
#include "wakeforge/graph.hpp"
#include "wakeforge/layout.hpp"
#include "wakeforge/wake.hpp"

namespace wakeforge::io {

using json = nlohmann::json;

// graphs: {v: [[span,stream,yaw],...], edges: [[src,dst],...],
//          e: [[dspan,dstream],...], u: [u_inf, ti]}
json graph_to_json(const FarmGraph& g);
FarmGraph graph_from_json(const json& j);

// scenario files: {positions: [[x,y],...], yaw: [...], wind_speed,
// wind_direction, ti, turbine: "v80" | {...}}
json scenario_to_json(const FarmScenario& sc);
FarmScenario scenario_from_json(const json& j);

json turbine_to_json(const TurbineSpec& spec);
TurbineSpec turbine_from_json(const json& j);

// results: {uw: [...], power_w: [...], total_w, near_wake}
json result_to_json(const SimulationResult& res);

json wake_params_to_json(const WakeParams& p);
WakeParams wake_params_from_json(const json& j);

json ga_config_to_json(const GaConfig& c);
GaConfig ga_config_from_json(const json& j);

json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j, int indent = 2);

/// Lines of a text file; transparently inflates when the name ends in .gz.
std::vector<std::string> read_lines(const std::string& path);
/// Writes lines joined by '\n'; gzip-compresses when the name ends in .gz.
void write_lines(const std::string& path, const std::vector<std::string>& lines);

void write_text(const std::string& path, const std::string& text);

std::string csv_cell(double v);  // shortest round-trip formatting

}  // namespace wakeforge::io
