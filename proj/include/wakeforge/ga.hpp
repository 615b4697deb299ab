#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "wakeforge/wake.hpp"

namespace wakeforge {

struct GaConfig {
  int population_size = 100;
  int n_generations = 50;
  double crossover_prob = 0.7;
  double mutation_rate = 0.5;  // per gene
  int elitism = 2;
  int tournament_size = 3;
  double yaw_bound_deg = 30.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Individual {
  Eigen::VectorXd chromosome;  // yaw angles, degrees
  double fitness = std::numeric_limits<double>::quiet_NaN();  // total farm power, W
};

struct GaHistory {
  std::vector<double> best_w;   // index 0 is the initial population
  std::vector<double> mean_w;
  std::vector<Eigen::VectorXd> best_chromosome;
};

/// Evaluates a batch of chromosomes for one fixed scenario; returns total
/// farm power per chromosome.
using FitnessFn = std::function<std::vector<double>(const std::vector<Eigen::VectorXd>&)>;

struct GaArchiveEntry {
  int generation = 0;  // 0 is the initial population
  int individual = 0;
  Eigen::VectorXd chromosome;
  double fitness = 0.0;
};

struct GaResult {
  Individual best;
  GaHistory history;
  bool aborted = false;
  std::string error;
};

/// Generational GA over real-valued yaw chromosomes: tournament selection,
/// uniform gene-swap crossover applied per pair with crossover_prob, per-gene
/// uniform-redraw mutation, verbatim elites. Deterministic per seed. When a
/// fitness call throws, the result carries the history so far with `aborted`
/// set. When `archive` is given, every evaluated individual is appended.
GaResult run_ga(const FitnessFn& fitness, int n_genes, const GaConfig& config,
                std::vector<GaArchiveEntry>* archive = nullptr);

/// Total farm power of each chromosome via the analytical simulator; the
/// scenario's own yaw vector is ignored.
std::vector<double> simulator_fitness(const FarmScenario& scenario_template,
                                      const WakeParams& params,
                                      const std::vector<Eigen::VectorXd>& chromosomes);

FitnessFn make_simulator_backend(FarmScenario scenario_template, WakeParams params = {});

/// Fitness of a champion selected by one backend, re-evaluated by another.
double cross_evaluate(const Individual& champion, const FitnessFn& other_backend);

}  // namespace wakeforge
