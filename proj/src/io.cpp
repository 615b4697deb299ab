#include "wakeforge/io.hpp"

#include <zlib.h>

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace wakeforge::io {

namespace {

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

json graph_to_json(const FarmGraph& g) {
  json j;
  json v = json::array();
  for (Eigen::Index i = 0; i < g.n_vertices(); ++i)
    v.push_back({g.vertices(i, 0), g.vertices(i, 1), g.vertices(i, 2)});
  json edges = json::array();
  json e = json::array();
  for (Eigen::Index k = 0; k < g.n_edges(); ++k) {
    edges.push_back({g.edges[static_cast<std::size_t>(k)].first,
                     g.edges[static_cast<std::size_t>(k)].second});
    e.push_back({g.edge_features(k, 0), g.edge_features(k, 1)});
  }
  j["v"] = std::move(v);
  j["edges"] = std::move(edges);
  j["e"] = std::move(e);
  j["u"] = {g.globals(0), g.globals(1)};
  return j;
}

FarmGraph graph_from_json(const json& j) {
  FarmGraph g;
  const auto& v = j.at("v");
  g.vertices.resize(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i)
    for (int c = 0; c < 3; ++c)
      g.vertices(static_cast<Eigen::Index>(i), c) = v[i].at(static_cast<std::size_t>(c)).get<double>();
  const auto& edges = j.at("edges");
  const auto& e = j.at("e");
  if (edges.size() != e.size())
    throw std::invalid_argument("graph: edges and edge features differ in length");
  g.edge_features.resize(static_cast<Eigen::Index>(e.size()), 2);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const int src = edges[k].at(0).get<int>();
    const int dst = edges[k].at(1).get<int>();
    if (src < 0 || dst < 0 || src >= g.vertices.rows() || dst >= g.vertices.rows())
      throw std::invalid_argument("graph: edge endpoint out of range");
    g.edges.emplace_back(src, dst);
    g.edge_features(static_cast<Eigen::Index>(k), 0) = e[k].at(0).get<double>();
    g.edge_features(static_cast<Eigen::Index>(k), 1) = e[k].at(1).get<double>();
  }
  const auto& u = j.at("u");
  g.globals = {u.at(0).get<double>(), u.at(1).get<double>()};
  return g;
}

json scenario_to_json(const FarmScenario& sc) {
  json j;
  json positions = json::array();
  for (Eigen::Index i = 0; i < sc.positions.rows(); ++i)
    positions.push_back({sc.positions(i, 0), sc.positions(i, 1)});
  j["positions"] = std::move(positions);
  json yaw = json::array();
  for (Eigen::Index i = 0; i < sc.yaw_deg.size(); ++i) yaw.push_back(sc.yaw_deg(i));
  j["yaw"] = std::move(yaw);
  j["wind_speed"] = sc.conditions.wind_speed;
  j["wind_direction"] = sc.conditions.wind_direction_deg;
  j["ti"] = sc.conditions.turbulence_intensity;
  if (sc.spec.name == "v80")
    j["turbine"] = "v80";
  else
    j["turbine"] = turbine_to_json(sc.spec);
  return j;
}

FarmScenario scenario_from_json(const json& j) {
  FarmScenario sc;
  if (!j.contains("positions") || !j["positions"].is_array())
    throw std::invalid_argument("scenario: missing positions array");
  const auto& positions = j["positions"];
  sc.positions.resize(static_cast<Eigen::Index>(positions.size()), 2);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!positions[i].is_array() || positions[i].size() != 2)
      throw std::invalid_argument("scenario: position " + std::to_string(i) +
                                  " is not an [x, y] pair");
    sc.positions(static_cast<Eigen::Index>(i), 0) = positions[i][0].get<double>();
    sc.positions(static_cast<Eigen::Index>(i), 1) = positions[i][1].get<double>();
  }
  if (j.contains("yaw")) {
    const auto& yaw = j["yaw"];
    if (yaw.size() != positions.size())
      throw std::invalid_argument("scenario: yaw length differs from positions");
    sc.yaw_deg.resize(static_cast<Eigen::Index>(yaw.size()));
    for (std::size_t i = 0; i < yaw.size(); ++i)
      sc.yaw_deg(static_cast<Eigen::Index>(i)) = yaw[i].get<double>();
  } else {
    sc.yaw_deg = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(positions.size()));
  }
  sc.conditions.wind_speed = j.value("wind_speed", 10.0);
  sc.conditions.wind_direction_deg = j.value("wind_direction", 270.0);
  sc.conditions.turbulence_intensity = j.value("ti", 0.08);
  if (!j.contains("turbine") || (j["turbine"].is_string() && j["turbine"] == "v80"))
    sc.spec = vestas_v80();
  else if (j["turbine"].is_object())
    sc.spec = turbine_from_json(j["turbine"]);
  else
    throw std::invalid_argument("scenario: turbine must be \"v80\" or an inline spec");
  sc.validate();
  return sc;
}

json turbine_to_json(const TurbineSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["rotor_diameter"] = spec.rotor_diameter;
  j["hub_height"] = spec.hub_height;
  j["cut_in"] = spec.cut_in;
  j["cut_out"] = spec.cut_out;
  j["rated_power"] = spec.rated_power;
  json pc = json::array();
  for (std::size_t i = 0; i < spec.power_curve.x.size(); ++i)
    pc.push_back({spec.power_curve.x[i], spec.power_curve.y[i]});
  j["power_curve"] = std::move(pc);
  json cc = json::array();
  for (std::size_t i = 0; i < spec.ct_curve.x.size(); ++i)
    cc.push_back({spec.ct_curve.x[i], spec.ct_curve.y[i]});
  j["ct_curve"] = std::move(cc);
  return j;
}

TurbineSpec turbine_from_json(const json& j) {
  TurbineSpec spec;
  spec.name = j.value("name", "custom");
  spec.rotor_diameter = j.at("rotor_diameter").get<double>();
  spec.hub_height = j.value("hub_height", 70.0);
  spec.cut_in = j.at("cut_in").get<double>();
  spec.cut_out = j.at("cut_out").get<double>();
  spec.rated_power = j.at("rated_power").get<double>();
  for (const auto& pair : j.at("power_curve")) {
    spec.power_curve.x.push_back(pair.at(0).get<double>());
    spec.power_curve.y.push_back(pair.at(1).get<double>());
  }
  for (const auto& pair : j.at("ct_curve")) {
    spec.ct_curve.x.push_back(pair.at(0).get<double>());
    spec.ct_curve.y.push_back(pair.at(1).get<double>());
  }
  spec.validate();
  return spec;
}

json result_to_json(const SimulationResult& res) {
  json j;
  json uw = json::array();
  for (Eigen::Index i = 0; i < res.effective_speeds.size(); ++i)
    uw.push_back(res.effective_speeds(i));
  json power = json::array();
  for (Eigen::Index i = 0; i < res.powers.size(); ++i) power.push_back(res.powers(i));
  j["uw"] = std::move(uw);
  j["power_w"] = std::move(power);
  j["total_w"] = res.total_power;
  j["near_wake"] = res.near_wake;
  return j;
}

json wake_params_to_json(const WakeParams& p) {
  return json{{"k", p.k},
              {"kd", p.kd},
              {"rho", p.rho},
              {"yaw_power_exponent", p.yaw_power_exponent},
              {"k_from_ti", p.k_from_ti},
              {"k_ti_slope", p.k_ti_slope},
              {"superposition", "sum_of_squares"}};
}

WakeParams wake_params_from_json(const json& j) {
  WakeParams p;
  p.k = j.value("k", p.k);
  p.kd = j.value("kd", p.kd);
  p.rho = j.value("rho", p.rho);
  p.yaw_power_exponent = j.value("yaw_power_exponent", p.yaw_power_exponent);
  p.k_from_ti = j.value("k_from_ti", p.k_from_ti);
  p.k_ti_slope = j.value("k_ti_slope", p.k_ti_slope);
  if (j.contains("superposition") && j["superposition"] != "sum_of_squares")
    throw std::invalid_argument("wake params: unknown superposition scheme");
  p.validate();
  return p;
}

json ga_config_to_json(const GaConfig& c) {
  return json{{"population_size", c.population_size},
              {"n_generations", c.n_generations},
              {"crossover_prob", c.crossover_prob},
              {"mutation_rate", c.mutation_rate},
              {"elitism", c.elitism},
              {"tournament_size", c.tournament_size},
              {"yaw_bound_deg", c.yaw_bound_deg},
              {"seed", c.seed}};
}

GaConfig ga_config_from_json(const json& j) {
  GaConfig c;
  c.population_size = j.value("population_size", c.population_size);
  c.n_generations = j.value("n_generations", c.n_generations);
  c.crossover_prob = j.value("crossover_prob", c.crossover_prob);
  c.mutation_rate = j.value("mutation_rate", c.mutation_rate);
  c.elitism = j.value("elitism", c.elitism);
  c.tournament_size = j.value("tournament_size", c.tournament_size);
  c.yaw_bound_deg = j.value("yaw_bound_deg", c.yaw_bound_deg);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const json& j, int indent) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(indent) << "\n";
  if (!out) throw std::runtime_error("short write to " + path);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::string content;
  if (has_suffix(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open " + path);
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) content.append(buf, static_cast<std::size_t>(n));
    const bool bad = n < 0;
    gzclose(f);
    if (bad) throw std::runtime_error("gzip read failure on " + path);
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    content = ss.str();
  }
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    if (end > start) lines.emplace_back(content.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::string content;
  for (const std::string& line : lines) {
    content += line;
    content += '\n';
  }
  if (has_suffix(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "wb9");
    if (!f) throw std::runtime_error("cannot write " + path);
    const int n = gzwrite(f, content.data(), static_cast<unsigned>(content.size()));
    gzclose(f);
    if (n != static_cast<int>(content.size()))
      throw std::runtime_error("gzip short write to " + path);
  } else {
    write_text(path, content);
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("short write to " + path);
}

std::string csv_cell(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace wakeforge::io
