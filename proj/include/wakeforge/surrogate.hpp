#pragma once

#include <cstdint>
#include <tuple>
#include <utility>
#include <vector>

#include "wakeforge/checkpoint.hpp"
#include "wakeforge/dataset.hpp"
#include "wakeforge/ga.hpp"
#include "wakeforge/graph.hpp"
#include "wakeforge/nn.hpp"
#include "wakeforge/optimizer.hpp"

namespace wakeforge {

struct TrainConfig {
  int batch_size = 32;
  LrSchedule schedule{4e-4, 500, 20000, 0.0};
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  long val_interval = 500;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    schedule.validate();
  }
};

struct Metrics {
  double mse = 0.0;            // normalized units, over all turbines
  double mean_rel_acc = 0.0;   // mean over scenarios of 1 - |sum(pred)-sum(true)|/sum(true)
  double min_rel_acc = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;  // best-validation weights
  std::vector<std::pair<long, double>> train_curve;  // (step, batch loss)
  std::vector<std::pair<long, double>> val_curve;    // (step, validation mse), step 0 included
  double best_val_mse = 0.0;
};

TrainResult train_transformer(const TransformerConfig& model_cfg, const TrainConfig& train_cfg,
                              const std::vector<DatasetRecord>& train_records,
                              const std::vector<DatasetRecord>& val_records);

TrainResult train_gnn(const GnnConfig& model_cfg, const TrainConfig& train_cfg,
                      const std::vector<DatasetRecord>& train_records,
                      const std::vector<DatasetRecord>& val_records);

Metrics evaluate(const Checkpoint& ckpt, const std::vector<DatasetRecord>& records);

/// Metric arithmetic exposed for direct testing: one (prediction, target)
/// power vector pair per scenario, both in watts.
Metrics compute_metrics(const std::vector<Eigen::VectorXd>& predicted_w,
                        const std::vector<Eigen::VectorXd>& target_w, double power_scale);

/// Padded forward pass over a normalized DenseBatch. Masked vertices produce
/// exactly zero; the batch must carry the checkpoint's stats fingerprint.
std::vector<Eigen::VectorXd> transformer_forward(const Checkpoint& ckpt, const DenseBatch& batch,
                                                 nn::AttentionMaps<double>* attention = nullptr);

/// Per-turbine predicted powers (W) for one scenario under any model kind.
Eigen::VectorXd predict_powers(const Checkpoint& ckpt, const FarmScenario& scenario);

/// Thresholded (i, j, score) triples from the head-averaged attention map of
/// the last block.
std::vector<std::tuple<int, int, double>> extract_attention(const Checkpoint& ckpt,
                                                            const FarmScenario& scenario,
                                                            double threshold = 0.1);

// Reusable fitness backend around a loaded surrogate: the model is built once
// and chromosome batches are evaluated in a single stacked forward pass
// (optionally chunked across threads; results are identical regardless of
// the chunking).
class SurrogateEvaluator {
 public:
  SurrogateEvaluator(const Checkpoint& ckpt, FarmScenario scenario_template, int n_threads = 1);
  ~SurrogateEvaluator();
  SurrogateEvaluator(const SurrogateEvaluator&) = delete;
  SurrogateEvaluator& operator=(const SurrogateEvaluator&) = delete;

  /// One batched forward pass over all chromosomes.
  std::vector<double> batched(const std::vector<Eigen::VectorXd>& chromosomes) const;
  /// Reference path: one forward pass per chromosome.
  std::vector<double> sequential(const std::vector<Eigen::VectorXd>& chromosomes) const;

  FitnessFn as_backend() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Convenience wrapper: builds an evaluator and runs one batched evaluation.
std::vector<double> surrogate_fitness(const Checkpoint& ckpt, const FarmScenario& scenario_template,
                                      const std::vector<Eigen::VectorXd>& chromosomes,
                                      int n_threads = 1);

/// Thread cap from WAKEFORGE_THREADS (defaults to the hardware count).
int thread_cap();

}  // namespace wakeforge
