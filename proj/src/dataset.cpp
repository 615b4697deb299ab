#include "wakeforge/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

#include "wakeforge/io.hpp"
#include "wakeforge/rng.hpp"

namespace wakeforge {

using json = nlohmann::json;

void ScenarioRanges::validate() const {
  if (n_min < 2 || n_max > 100 || n_min > n_max)
    throw std::invalid_argument("ScenarioRanges: turbine count must lie in [2, 100]");
  if (!(speed_min > 0.0) || speed_min > speed_max)
    throw std::invalid_argument("ScenarioRanges: bad wind speed range");
  if (ti_min < 0.0 || ti_max > 1.0 || ti_min > ti_max)
    throw std::invalid_argument("ScenarioRanges: bad TI range");
  if (dir_min > dir_max) throw std::invalid_argument("ScenarioRanges: bad direction range");
  if (!(yaw_abs_max_deg >= 0.0)) throw std::invalid_argument("ScenarioRanges: bad yaw bound");
  if (min_spacing < 2.0) throw std::invalid_argument("ScenarioRanges: min_spacing must be >= 2");
}

namespace {

constexpr std::array<LayoutStyle, 4> kRandomStyles = {
    LayoutStyle::cluster, LayoutStyle::single_string, LayoutStyle::multiple_string,
    LayoutStyle::parallel_string};

struct SampledScenario {
  LayoutStyle style;
  FarmScenario scenario;
};

SampledScenario sample_scenario(Rng& rng, const ScenarioRanges& r, bool random_yaw) {
  const TurbineSpec& spec = vestas_v80();
  for (int attempt = 0; attempt < 10; ++attempt) {
    const LayoutStyle style = kRandomStyles[static_cast<std::size_t>(rng.uniform_int(4))];
    const int n = r.n_min + rng.uniform_int(r.n_max - r.n_min + 1);
    LayoutParams lp;
    lp.n_turbines = n;
    lp.min_spacing = r.min_spacing;
    lp.d0 = spec.rotor_diameter;
    lp.seed = rng.next_u64();
    FarmScenario sc;
    try {
      sc.positions = generate_layout(style, lp);
    } catch (const std::runtime_error&) {
      continue;  // infeasible draw, resample
    }
    sc.spec = spec;
    sc.conditions.wind_speed = rng.uniform(r.speed_min, r.speed_max);
    sc.conditions.wind_direction_deg = rng.uniform(r.dir_min, r.dir_max);
    sc.conditions.turbulence_intensity = rng.uniform(r.ti_min, r.ti_max);
    sc.yaw_deg = Eigen::VectorXd::Zero(n);
    if (random_yaw)
      for (int i = 0; i < n; ++i)
        sc.yaw_deg(i) = rng.uniform(-r.yaw_abs_max_deg, r.yaw_abs_max_deg);
    return {style, std::move(sc)};
  }
  throw std::runtime_error("sample_scenario: layout generation failed after bounded retries");
}

int resolve_threads(int n_threads) {
  if (n_threads > 0) return n_threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

template <class PerScenario>
void run_indexed(int n, int n_threads, PerScenario&& body) {
  n_threads = std::min(resolve_threads(n_threads), std::max(1, n));
  if (n_threads <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(n_threads));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<DatasetRecord> gen_standard(int n_scenarios, const ScenarioRanges& ranges,
                                        const WakeParams& params, std::uint64_t seed,
                                        int n_threads) {
  ranges.validate();
  params.validate();
  if (n_scenarios < 1) throw std::invalid_argument("gen_standard: n_scenarios must be >= 1");
  std::vector<DatasetRecord> records(static_cast<std::size_t>(n_scenarios));
  run_indexed(n_scenarios, n_threads, [&](int i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    SampledScenario s = sample_scenario(rng, ranges, /*random_yaw=*/true);
    DatasetRecord& rec = records[static_cast<std::size_t>(i)];
    rec.scenario_id = i;
    rec.style = s.style;
    rec.scenario = std::move(s.scenario);
    rec.powers = simulate_farm(rec.scenario, params).powers;
    rec.provenance = {Provenance::Kind::random_yaw, -1, -1};
  });
  return records;
}

std::vector<DatasetRecord> gen_enhanced(int n_scenarios, const ScenarioRanges& ranges,
                                        const WakeParams& params, const GaConfig& ga_config,
                                        int samples_per_scenario, std::uint64_t seed,
                                        int n_threads) {
  ranges.validate();
  params.validate();
  ga_config.validate();
  if (n_scenarios < 1) throw std::invalid_argument("gen_enhanced: n_scenarios must be >= 1");
  if (samples_per_scenario < 1)
    throw std::invalid_argument("gen_enhanced: samples_per_scenario must be >= 1");

  std::vector<std::vector<DatasetRecord>> per_scenario(static_cast<std::size_t>(n_scenarios));
  run_indexed(n_scenarios, n_threads, [&](int i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    SampledScenario s = sample_scenario(rng, ranges, /*random_yaw=*/false);
    GaConfig ga = ga_config;
    ga.yaw_bound_deg = ranges.yaw_abs_max_deg;
    ga.seed = rng.next_u64();
    std::vector<GaArchiveEntry> archive;
    const GaResult res = run_ga(make_simulator_backend(s.scenario, params),
                                static_cast<int>(s.scenario.size()), ga, &archive);
    if (res.aborted)
      throw std::runtime_error("gen_enhanced: GA aborted on scenario " + std::to_string(i) +
                               ": " + res.error);
    const int total = static_cast<int>(archive.size());
    if (samples_per_scenario > total)
      throw std::invalid_argument("gen_enhanced: requested " +
                                  std::to_string(samples_per_scenario) + " samples but the GA " +
                                  "archive holds only " + std::to_string(total) + " evaluations");
    // partial Fisher-Yates, then ascending for stable output order
    std::vector<int> pool(static_cast<std::size_t>(total));
    std::iota(pool.begin(), pool.end(), 0);
    for (int k = 0; k < samples_per_scenario; ++k) {
      const int pick = k + rng.uniform_int(total - k);
      std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(pick)]);
    }
    std::vector<int> chosen(pool.begin(), pool.begin() + samples_per_scenario);
    std::sort(chosen.begin(), chosen.end());

    auto& out = per_scenario[static_cast<std::size_t>(i)];
    out.reserve(static_cast<std::size_t>(samples_per_scenario));
    for (const int idx : chosen) {
      const GaArchiveEntry& entry = archive[static_cast<std::size_t>(idx)];
      DatasetRecord rec;
      rec.scenario_id = i;
      rec.style = s.style;
      rec.scenario = s.scenario;
      rec.scenario.yaw_deg = entry.chromosome;
      rec.powers = simulate_farm(rec.scenario, params).powers;
      rec.provenance = {Provenance::Kind::ga_sampled, entry.generation, entry.individual};
      out.push_back(std::move(rec));
    }
  });

  std::vector<DatasetRecord> records;
  records.reserve(static_cast<std::size_t>(n_scenarios * samples_per_scenario));
  for (auto& group : per_scenario)
    for (auto& rec : group) records.push_back(std::move(rec));
  return records;
}

DatasetSplits split_by_scenario(const std::vector<DatasetRecord>& records,
                                const std::array<double, 3>& fractions, std::uint64_t seed) {
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    throw std::invalid_argument("split_by_scenario: fractions must sum to 1");
  std::vector<int> ids;
  for (const auto& rec : records)
    if (std::find(ids.begin(), ids.end(), rec.scenario_id) == ids.end())
      ids.push_back(rec.scenario_id);
  Rng rng(seed);
  for (int k = static_cast<int>(ids.size()) - 1; k > 0; --k)
    std::swap(ids[static_cast<std::size_t>(k)],
              ids[static_cast<std::size_t>(rng.uniform_int(k + 1))]);
  const std::size_t n = ids.size();
  const std::size_t n_train = static_cast<std::size_t>(std::floor(fractions[0] * static_cast<double>(n)));
  const std::size_t n_val = static_cast<std::size_t>(std::floor(fractions[1] * static_cast<double>(n)));
  std::set<int> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::set<int> val_ids(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                        ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  DatasetSplits splits;
  for (const auto& rec : records) {
    if (train_ids.count(rec.scenario_id))
      splits.train.push_back(rec);
    else if (val_ids.count(rec.scenario_id))
      splits.val.push_back(rec);
    else
      splits.test.push_back(rec);
  }
  return splits;
}

std::string record_to_jsonl(const DatasetRecord& r) {
  json j = io::scenario_to_json(r.scenario);
  j["scenario_id"] = r.scenario_id;
  j["style"] = to_string(r.style);
  json powers = json::array();
  for (Eigen::Index i = 0; i < r.powers.size(); ++i) powers.push_back(r.powers(i));
  j["powers_w"] = std::move(powers);
  json prov;
  prov["kind"] = r.provenance.kind == Provenance::Kind::random_yaw ? "random_yaw" : "ga_sampled";
  if (r.provenance.kind == Provenance::Kind::ga_sampled) {
    prov["generation"] = r.provenance.generation;
    prov["individual"] = r.provenance.individual;
  }
  j["provenance"] = std::move(prov);
  return j.dump();
}

DatasetRecord record_from_jsonl(const std::string& line) {
  const json j = json::parse(line);
  DatasetRecord r;
  r.scenario = io::scenario_from_json(j);
  r.scenario_id = j.at("scenario_id").get<int>();
  r.style = layout_style_from_string(j.at("style").get<std::string>());
  const auto powers = j.at("powers_w").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(powers.size()) != r.scenario.size())
    throw std::invalid_argument("dataset record: powers length differs from turbine count");
  r.powers = Eigen::Map<const Eigen::VectorXd>(powers.data(),
                                               static_cast<Eigen::Index>(powers.size()));
  const json& prov = j.at("provenance");
  const std::string kind = prov.at("kind").get<std::string>();
  if (kind == "random_yaw") {
    r.provenance = {Provenance::Kind::random_yaw, -1, -1};
  } else if (kind == "ga_sampled") {
    r.provenance = {Provenance::Kind::ga_sampled, prov.at("generation").get<int>(),
                    prov.at("individual").get<int>()};
  } else {
    throw std::invalid_argument("dataset record: unknown provenance kind " + kind);
  }
  return r;
}

namespace {

json ranges_to_json(const ScenarioRanges& r) {
  return json{{"n_min", r.n_min},         {"n_max", r.n_max},
              {"speed_min", r.speed_min}, {"speed_max", r.speed_max},
              {"dir_min", r.dir_min},     {"dir_max", r.dir_max},
              {"ti_min", r.ti_min},       {"ti_max", r.ti_max},
              {"yaw_abs_max_deg", r.yaw_abs_max_deg}, {"min_spacing", r.min_spacing}};
}

ScenarioRanges ranges_from_json(const json& j) {
  ScenarioRanges r;
  r.n_min = j.at("n_min").get<int>();
  r.n_max = j.at("n_max").get<int>();
  r.speed_min = j.at("speed_min").get<double>();
  r.speed_max = j.at("speed_max").get<double>();
  r.dir_min = j.at("dir_min").get<double>();
  r.dir_max = j.at("dir_max").get<double>();
  r.ti_min = j.at("ti_min").get<double>();
  r.ti_max = j.at("ti_max").get<double>();
  r.yaw_abs_max_deg = j.at("yaw_abs_max_deg").get<double>();
  r.min_spacing = j.at("min_spacing").get<double>();
  r.validate();
  return r;
}

void check_disjoint(const DatasetSplits& splits) {
  std::set<int> train, val, test;
  for (const auto& r : splits.train) train.insert(r.scenario_id);
  for (const auto& r : splits.val) val.insert(r.scenario_id);
  for (const auto& r : splits.test) test.insert(r.scenario_id);
  for (int id : val)
    if (train.count(id))
      throw std::logic_error("dataset splits leak scenario " + std::to_string(id));
  for (int id : test)
    if (train.count(id) || val.count(id))
      throw std::logic_error("dataset splits leak scenario " + std::to_string(id));
}

std::vector<std::string> split_names(const std::string& prefix, bool gzip) {
  const std::string ext = gzip ? ".jsonl.gz" : ".jsonl";
  return {prefix + ".train" + ext, prefix + ".val" + ext, prefix + ".test" + ext};
}

}  // namespace

void write_dataset(const std::string& prefix, const DatasetSplits& splits,
                   DatasetManifest manifest, bool gzip) {
  check_disjoint(splits);
  manifest.compressed = gzip;
  manifest.split_counts = {splits.train.size(), splits.val.size(), splits.test.size()};
  if (manifest.generator.empty())
    manifest.generator = std::string("wakeforge ") + WAKEFORGE_GIT_DESCRIBE;

  json j;
  j["schema_version"] = manifest.schema_version;
  j["generator"] = manifest.generator;
  j["kind"] = manifest.kind;
  j["wake_params"] = io::wake_params_to_json(manifest.wake_params);
  j["ranges"] = ranges_to_json(manifest.ranges);
  j["n_scenarios"] = manifest.n_scenarios;
  j["samples_per_scenario"] = manifest.samples_per_scenario;
  if (manifest.kind == "enhanced") j["ga"] = io::ga_config_to_json(manifest.ga);
  j["split_fractions"] = manifest.split_fractions;
  j["master_seed"] = manifest.master_seed;
  j["split_counts"] = manifest.split_counts;
  j["compressed"] = manifest.compressed;
  io::write_json_file(prefix + ".manifest.json", j);

  const auto names = split_names(prefix, gzip);
  const std::vector<const std::vector<DatasetRecord>*> groups = {&splits.train, &splits.val,
                                                                 &splits.test};
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<std::string> lines;
    lines.reserve(groups[s]->size());
    for (const auto& rec : *groups[s]) lines.push_back(record_to_jsonl(rec));
    io::write_lines(names[s], lines);
  }

  // read back and validate counts so a bad write cannot exit successfully
  const auto reread = read_dataset(prefix);
  if (reread.first.train.size() != splits.train.size() ||
      reread.first.val.size() != splits.val.size() ||
      reread.first.test.size() != splits.test.size())
    throw std::runtime_error("write_dataset: verification re-read mismatch for " + prefix);
}

std::pair<DatasetSplits, DatasetManifest> read_dataset(const std::string& prefix) {
  const json j = io::read_json_file(prefix + ".manifest.json");
  DatasetManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != 1)
    throw std::invalid_argument("dataset: unsupported schema version " +
                                std::to_string(m.schema_version));
  m.generator = j.value("generator", "");
  m.kind = j.at("kind").get<std::string>();
  m.wake_params = io::wake_params_from_json(j.at("wake_params"));
  m.ranges = ranges_from_json(j.at("ranges"));
  m.n_scenarios = j.at("n_scenarios").get<int>();
  m.samples_per_scenario = j.at("samples_per_scenario").get<int>();
  if (j.contains("ga")) m.ga = io::ga_config_from_json(j.at("ga"));
  m.split_fractions = j.at("split_fractions").get<std::array<double, 3>>();
  m.master_seed = j.at("master_seed").get<std::uint64_t>();
  m.split_counts = j.at("split_counts").get<std::array<std::size_t, 3>>();
  m.compressed = j.value("compressed", false);

  DatasetSplits splits;
  const auto names = split_names(prefix, m.compressed);
  std::vector<std::vector<DatasetRecord>*> groups = {&splits.train, &splits.val, &splits.test};
  for (std::size_t s = 0; s < 3; ++s) {
    for (const std::string& line : io::read_lines(names[s]))
      groups[s]->push_back(record_from_jsonl(line));
    if (groups[s]->size() != m.split_counts[s])
      throw std::runtime_error("dataset: " + names[s] + " holds " +
                               std::to_string(groups[s]->size()) + " records, manifest expects " +
                               std::to_string(m.split_counts[s]));
  }
  check_disjoint(splits);
  return {std::move(splits), std::move(m)};
}

}  // namespace wakeforge
