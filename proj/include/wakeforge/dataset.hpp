#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wakeforge/ga.hpp"
#include "wakeforge/layout.hpp"
#include "wakeforge/wake.hpp"

namespace wakeforge {

struct ScenarioRanges {
  int n_min = 2;
  int n_max = 100;
  double speed_min = 8.0;
  double speed_max = 15.0;
  double dir_min = 0.0;
  double dir_max = 359.0;
  double ti_min = 0.05;
  double ti_max = 0.15;
  double yaw_abs_max_deg = 30.0;
  double min_spacing = 3.0;

  void validate() const;
};

struct Provenance {
  enum class Kind { random_yaw, ga_sampled };
  Kind kind = Kind::random_yaw;
  int generation = -1;
  int individual = -1;
};

struct DatasetRecord {
  int scenario_id = 0;
  LayoutStyle style = LayoutStyle::cluster;
  FarmScenario scenario;
  Eigen::VectorXd powers;  // W, simulator targets
  Provenance provenance;
};

struct DatasetManifest {
  int schema_version = 1;
  std::string generator;
  std::string kind = "standard";  // "standard" | "enhanced"
  WakeParams wake_params;
  ScenarioRanges ranges;
  int n_scenarios = 0;
  int samples_per_scenario = 1;
  GaConfig ga;  // enhanced datasets only
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  std::uint64_t master_seed = 0;
  std::array<std::size_t, 3> split_counts{0, 0, 0};
  bool compressed = false;
};

struct DatasetSplits {
  std::vector<DatasetRecord> train, val, test;
};

/// Scenarios with i.i.d. uniform yaw and simulator targets. Each scenario
/// owns an RNG stream derived from (seed, index), so parallel generation is
/// byte-identical to serial.
std::vector<DatasetRecord> gen_standard(int n_scenarios, const ScenarioRanges& ranges,
                                        const WakeParams& params, std::uint64_t seed,
                                        int n_threads = 1);

/// Scenarios whose yaw configurations are sampled uniformly without
/// replacement from the full evaluation archive of one simulator-driven GA
/// run per scenario, then re-simulated for exact per-turbine targets.
std::vector<DatasetRecord> gen_enhanced(int n_scenarios, const ScenarioRanges& ranges,
                                        const WakeParams& params, const GaConfig& ga_config,
                                        int samples_per_scenario, std::uint64_t seed,
                                        int n_threads = 1);

/// Partition by scenario id (all samples of a scenario land in one split).
DatasetSplits split_by_scenario(const std::vector<DatasetRecord>& records,
                                const std::array<double, 3>& fractions, std::uint64_t seed);

/// Writes <prefix>.manifest.json plus .train/.val/.test.jsonl[.gz], verifying
/// scenario-level split disjointness first and re-reading what was written.
void write_dataset(const std::string& prefix, const DatasetSplits& splits,
                   DatasetManifest manifest, bool gzip = false);

std::pair<DatasetSplits, DatasetManifest> read_dataset(const std::string& prefix);

std::string record_to_jsonl(const DatasetRecord& r);
DatasetRecord record_from_jsonl(const std::string& line);

}  // namespace wakeforge
