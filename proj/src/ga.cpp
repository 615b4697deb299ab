#include "wakeforge/ga.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "wakeforge/rng.hpp"

namespace wakeforge {

void GaConfig::validate() const {
  if (population_size < 2) throw std::invalid_argument("GaConfig: population_size must be >= 2");
  if (n_generations < 1) throw std::invalid_argument("GaConfig: n_generations must be >= 1");
  if (crossover_prob < 0.0 || crossover_prob > 1.0)
    throw std::invalid_argument("GaConfig: crossover_prob must lie in [0, 1]");
  if (mutation_rate < 0.0 || mutation_rate > 1.0)
    throw std::invalid_argument("GaConfig: mutation_rate must lie in [0, 1]");
  if (elitism < 0 || elitism > population_size)
    throw std::invalid_argument("GaConfig: elitism must lie in [0, population_size]");
  if (tournament_size < 1) throw std::invalid_argument("GaConfig: tournament_size must be >= 1");
  if (!(yaw_bound_deg > 0.0)) throw std::invalid_argument("GaConfig: yaw bound must be > 0");
}

namespace {

// indices of the population sorted by descending fitness, ties by index
std::vector<int> rank_by_fitness(const std::vector<Individual>& pop) {
  std::vector<int> idx(pop.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return pop[static_cast<std::size_t>(a)].fitness > pop[static_cast<std::size_t>(b)].fitness;
  });
  return idx;
}

int tournament(const std::vector<Individual>& pop, Rng& rng, int size) {
  int best = rng.uniform_int(static_cast<int>(pop.size()));
  for (int t = 1; t < size; ++t) {
    const int cand = rng.uniform_int(static_cast<int>(pop.size()));
    if (pop[static_cast<std::size_t>(cand)].fitness >
        pop[static_cast<std::size_t>(best)].fitness)
      best = cand;
  }
  return best;
}

void record_generation(GaHistory& hist, const std::vector<Individual>& pop) {
  double best = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    sum += pop[i].fitness;
    if (pop[i].fitness > best) {
      best = pop[i].fitness;
      best_i = i;
    }
  }
  hist.best_w.push_back(best);
  hist.mean_w.push_back(sum / static_cast<double>(pop.size()));
  hist.best_chromosome.push_back(pop[best_i].chromosome);
}

}  // namespace

GaResult run_ga(const FitnessFn& fitness, int n_genes, const GaConfig& cfg,
                std::vector<GaArchiveEntry>* archive) {
  cfg.validate();
  if (n_genes < 1) throw std::invalid_argument("run_ga: n_genes must be >= 1");
  Rng rng(cfg.seed);
  const double bound = cfg.yaw_bound_deg;
  const int pop_size = cfg.population_size;

  GaResult result;
  std::vector<Individual> pop(static_cast<std::size_t>(pop_size));
  for (auto& ind : pop) {
    ind.chromosome.resize(n_genes);
    for (int g = 0; g < n_genes; ++g) ind.chromosome(g) = rng.uniform(-bound, bound);
  }

  auto evaluate = [&](std::vector<Individual*> pending, int generation) -> bool {
    if (pending.empty()) return true;
    std::vector<Eigen::VectorXd> chroms;
    chroms.reserve(pending.size());
    for (const Individual* ind : pending) chroms.push_back(ind->chromosome);
    std::vector<double> fit;
    try {
      fit = fitness(chroms);
    } catch (const std::exception& e) {
      result.aborted = true;
      result.error = e.what();
      return false;
    }
    if (fit.size() != pending.size()) {
      result.aborted = true;
      result.error = "fitness backend returned wrong batch size";
      return false;
    }
    for (std::size_t i = 0; i < pending.size(); ++i) pending[i]->fitness = fit[i];
    if (archive) {
      for (std::size_t i = 0; i < pending.size(); ++i)
        archive->push_back({generation, static_cast<int>(i), pending[i]->chromosome,
                            pending[i]->fitness});
    }
    return true;
  };

  auto track_best = [&] {
    for (const Individual& ind : pop)
      if (!(result.best.fitness >= ind.fitness)) result.best = ind;
  };

  std::vector<Individual*> all;
  for (auto& ind : pop) all.push_back(&ind);
  if (!evaluate(all, 0)) return result;
  record_generation(result.history, pop);
  track_best();

  for (int gen = 1; gen <= cfg.n_generations; ++gen) {
    std::vector<Individual> next;
    next.reserve(static_cast<std::size_t>(pop_size));
    const std::vector<int> ranked = rank_by_fitness(pop);
    for (int e = 0; e < cfg.elitism && e < pop_size; ++e)
      next.push_back(pop[static_cast<std::size_t>(ranked[static_cast<std::size_t>(e)])]);

    while (static_cast<int>(next.size()) < pop_size) {
      Individual child_a = pop[static_cast<std::size_t>(tournament(pop, rng, cfg.tournament_size))];
      Individual child_b = pop[static_cast<std::size_t>(tournament(pop, rng, cfg.tournament_size))];
      if (rng.bernoulli(cfg.crossover_prob)) {
        for (int g = 0; g < n_genes; ++g)
          if (rng.bernoulli(0.5)) std::swap(child_a.chromosome(g), child_b.chromosome(g));
      }
      for (Individual* child : {&child_a, &child_b}) {
        for (int g = 0; g < n_genes; ++g)
          if (rng.bernoulli(cfg.mutation_rate)) child->chromosome(g) = rng.uniform(-bound, bound);
        child->fitness = std::numeric_limits<double>::quiet_NaN();
      }
      next.push_back(std::move(child_a));
      if (static_cast<int>(next.size()) < pop_size) next.push_back(std::move(child_b));
    }

    pop = std::move(next);
    std::vector<Individual*> pending;
    for (std::size_t i = static_cast<std::size_t>(std::min(cfg.elitism, pop_size)); i < pop.size();
         ++i)
      pending.push_back(&pop[i]);
    if (!evaluate(pending, gen)) return result;
    record_generation(result.history, pop);
    track_best();
  }
  return result;
}

std::vector<double> simulator_fitness(const FarmScenario& tmpl, const WakeParams& params,
                                      const std::vector<Eigen::VectorXd>& chromosomes) {
  std::vector<double> out;
  out.reserve(chromosomes.size());
  FarmScenario sc = tmpl;
  for (const Eigen::VectorXd& chrom : chromosomes) {
    if (chrom.size() != tmpl.size())
      throw std::invalid_argument("simulator_fitness: chromosome length " +
                                  std::to_string(chrom.size()) + " differs from turbine count " +
                                  std::to_string(tmpl.size()));
    sc.yaw_deg = chrom;
    out.push_back(simulate_farm(sc, params).total_power);
  }
  return out;
}

FitnessFn make_simulator_backend(FarmScenario tmpl, WakeParams params) {
  return [tmpl = std::move(tmpl), params](const std::vector<Eigen::VectorXd>& chroms) {
    return simulator_fitness(tmpl, params, chroms);
  };
}

double cross_evaluate(const Individual& champion, const FitnessFn& other_backend) {
  return other_backend({champion.chromosome})[0];
}

}  // namespace wakeforge
