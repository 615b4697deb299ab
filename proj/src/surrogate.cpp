#include "wakeforge/surrogate.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <thread>

#include "wakeforge/rng.hpp"

namespace wakeforge {

int thread_cap() {
  if (const char* env = std::getenv("WAKEFORGE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

struct PreparedSet {
  std::vector<Eigen::MatrixXd> feats;    // n x 5, normalized
  std::vector<Eigen::VectorXd> targets;  // normalized power
  std::vector<FarmGraph> graphs;         // normalized (built on demand)
};

PreparedSet prepare(const std::vector<DatasetRecord>& records, const FeatureStats& stats,
                    bool with_graphs) {
  PreparedSet out;
  out.feats.reserve(records.size());
  out.targets.reserve(records.size());
  for (const DatasetRecord& rec : records) {
    const int n = static_cast<int>(rec.scenario.size());
    DenseBatch b = to_dense({rec.scenario}, n);
    normalize(b, stats);
    out.feats.push_back(std::move(b.x[0]));
    if (rec.powers.size() != n)
      throw std::invalid_argument("dataset record: powers length differs from turbine count");
    out.targets.push_back(normalize_power(rec.powers, stats));
    if (with_graphs) {
      FarmGraph g = build_directed_graph(rec.scenario);
      normalize(g, stats);
      out.graphs.push_back(std::move(g));
    }
  }
  return out;
}

std::vector<FarmScenario> scenario_list(const std::vector<DatasetRecord>& records) {
  std::vector<FarmScenario> out;
  out.reserve(records.size());
  for (const auto& rec : records) out.push_back(rec.scenario);
  return out;
}

// stacked rows + spans over a list of prepared items
template <class S>
std::pair<ad::Tensor<S>, std::vector<nn::ItemSpan>> stack_items(
    const PreparedSet& set, const std::vector<int>& indices) {
  Eigen::Index total = 0;
  for (int idx : indices) total += set.feats[static_cast<std::size_t>(idx)].rows();
  ad::Mat<S> rows(total, 5);
  std::vector<nn::ItemSpan> spans;
  spans.reserve(indices.size());
  Eigen::Index at = 0;
  for (int idx : indices) {
    const auto& f = set.feats[static_cast<std::size_t>(idx)];
    rows.middleRows(at, f.rows()) = f.template cast<S>();
    spans.push_back({at, f.rows(), nullptr});
    at += f.rows();
  }
  return {ad::Tensor<S>::constant(std::move(rows)), std::move(spans)};
}

Eigen::MatrixXd stack_targets(const PreparedSet& set, const std::vector<int>& indices) {
  Eigen::Index total = 0;
  for (int idx : indices) total += set.targets[static_cast<std::size_t>(idx)].size();
  Eigen::MatrixXd t(total, 1);
  Eigen::Index at = 0;
  for (int idx : indices) {
    const auto& y = set.targets[static_cast<std::size_t>(idx)];
    t.col(0).segment(at, y.size()) = y;
    at += y.size();
  }
  return t;
}

double validation_mse_transformer(const nn::TransformerWeights<double>& w,
                                  const PreparedSet& val) {
  if (val.feats.empty()) return std::numeric_limits<double>::quiet_NaN();
  ad::NoGradGuard ng;
  double sum_sq = 0.0;
  long count = 0;
  const int chunk = 64;
  for (std::size_t start = 0; start < val.feats.size(); start += chunk) {
    std::vector<int> idx;
    for (std::size_t i = start; i < std::min(val.feats.size(), start + chunk); ++i)
      idx.push_back(static_cast<int>(i));
    auto [rows, spans] = stack_items<double>(val, idx);
    const Eigen::MatrixXd out = nn::transformer_apply(w, rows, spans).value();
    const Eigen::MatrixXd target = stack_targets(val, idx);
    sum_sq += (out - target).squaredNorm();
    count += out.rows();
  }
  return sum_sq / static_cast<double>(count);
}

double validation_mse_gnn(const nn::GnnWeights<double>& w, const PreparedSet& val) {
  if (val.graphs.empty()) return std::numeric_limits<double>::quiet_NaN();
  ad::NoGradGuard ng;
  double sum_sq = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < val.graphs.size(); ++i) {
    const Eigen::MatrixXd out = nn::gnn_apply(w, val.graphs[i]).value();
    sum_sq += (out.col(0) - val.targets[i]).squaredNorm();
    count += out.rows();
  }
  return sum_sq / static_cast<double>(count);
}

std::string format_batch_ids(const std::vector<int>& ids) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? "," : "") << ids[i];
  os << "]";
  return os.str();
}

template <class Weights, class StepFn, class ValFn>
TrainResult train_loop(Weights& weights, const TrainConfig& cfg, std::size_t train_size,
                       const StepFn& step_fn, const ValFn& val_fn) {
  TrainResult result;
  AdamWOptions opts;
  opts.weight_decay = cfg.weight_decay;
  auto params = weights.params();
  AdamW<double> opt(params, opts);
  Rng batch_rng(derive_seed(cfg.seed, 0xba7c8e5ull));

  auto snapshot = [&] { return export_named_params<double>(weights.named_params()); };

  double best_val = val_fn();
  bool have_val = !std::isnan(best_val);
  if (have_val) result.val_curve.emplace_back(0, best_val);
  std::map<std::string, Eigen::MatrixXd> best_weights = snapshot();

  const long total = cfg.schedule.total_steps;
  for (long step = 1; step <= total; ++step) {
    const double lr = lr_at(step, cfg.schedule);
    std::vector<int> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b)
      batch.push_back(batch_rng.uniform_int(static_cast<int>(train_size)));

    ad::Tensor<double> loss = step_fn(batch);
    const double loss_v = loss.value()(0, 0);
    if (!std::isfinite(loss_v)) {
      std::ostringstream os;
      os << "training diverged: loss=" << loss_v << " at step " << step << " (lr=" << lr
         << ", batch=" << format_batch_ids(batch) << ")";
      throw std::runtime_error(os.str());
    }
    opt.zero_grad();
    loss.backward();
    opt.step(lr);
    result.train_curve.emplace_back(step, loss_v);

    if ((cfg.val_interval > 0 && step % cfg.val_interval == 0) || step == total) {
      const double v = val_fn();
      if (!std::isnan(v)) {
        result.val_curve.emplace_back(step, v);
        if (!have_val || v < best_val) {
          best_val = v;
          have_val = true;
          best_weights = snapshot();
        }
      }
    }
  }
  if (!have_val) best_weights = snapshot();  // no validation set: keep final weights
  result.best_val_mse = have_val ? best_val : std::numeric_limits<double>::quiet_NaN();
  result.checkpoint.weights = std::move(best_weights);
  result.checkpoint.steps_trained = total;
  return result;
}

}  // namespace

TrainResult train_transformer(const TransformerConfig& model_cfg, const TrainConfig& train_cfg,
                              const std::vector<DatasetRecord>& train_records,
                              const std::vector<DatasetRecord>& val_records) {
  model_cfg.validate();
  train_cfg.validate();
  if (train_records.empty()) throw std::invalid_argument("train: empty training set");
  const FeatureStats stats = fit_stats(scenario_list(train_records));
  const PreparedSet train = prepare(train_records, stats, false);
  const PreparedSet val = prepare(val_records, stats, false);

  auto weights = nn::transformer_init<double>(model_cfg, train_cfg.seed);
  std::optional<Rng> dropout_rng;
  if (model_cfg.dropout > 0.0)
    dropout_rng.emplace(derive_seed(train_cfg.seed, 0xd09ull));

  auto step_fn = [&](const std::vector<int>& batch) {
    auto [rows, spans] = stack_items<double>(train, batch);
    nn::DropoutSampler drop{dropout_rng ? &*dropout_rng : nullptr, model_cfg.dropout};
    auto out = nn::transformer_apply<double>(weights, rows, spans, nullptr,
                                             dropout_rng ? &drop : nullptr);
    return ad::mse_loss(out, stack_targets(train, batch));
  };
  auto val_fn = [&] { return validation_mse_transformer(weights, val); };

  TrainResult result = train_loop(weights, train_cfg, train.feats.size(), step_fn, val_fn);
  result.checkpoint.kind = ModelKind::transformer;
  result.checkpoint.transformer = model_cfg;
  result.checkpoint.stats = stats;
  result.checkpoint.seed = train_cfg.seed;
  result.checkpoint.best_val_mse = result.best_val_mse;
  return result;
}

TrainResult train_gnn(const GnnConfig& model_cfg, const TrainConfig& train_cfg,
                      const std::vector<DatasetRecord>& train_records,
                      const std::vector<DatasetRecord>& val_records) {
  model_cfg.validate();
  train_cfg.validate();
  if (train_records.empty()) throw std::invalid_argument("train: empty training set");
  const FeatureStats stats = fit_stats(scenario_list(train_records));
  const PreparedSet train = prepare(train_records, stats, true);
  const PreparedSet val = prepare(val_records, stats, true);

  auto weights = nn::gnn_init<double>(model_cfg, train_cfg.seed);

  auto step_fn = [&](const std::vector<int>& batch) {
    std::vector<ad::Tensor<double>> outs;
    outs.reserve(batch.size());
    for (int idx : batch) outs.push_back(nn::gnn_apply(weights, train.graphs[static_cast<std::size_t>(idx)]));
    auto out = outs.size() == 1 ? outs.front() : ad::concat_rows(outs);
    return ad::mse_loss(out, stack_targets(train, batch));
  };
  auto val_fn = [&] { return validation_mse_gnn(weights, val); };

  TrainResult result = train_loop(weights, train_cfg, train.graphs.size(), step_fn, val_fn);
  result.checkpoint.kind = ModelKind::gnn;
  result.checkpoint.gnn = model_cfg;
  result.checkpoint.stats = stats;
  result.checkpoint.seed = train_cfg.seed;
  result.checkpoint.best_val_mse = result.best_val_mse;
  return result;
}

namespace {

std::vector<Eigen::VectorXd> padded_apply(const nn::TransformerWeights<double>& w,
                                          const FeatureStats& stats, const DenseBatch& batch,
                                          nn::AttentionMaps<double>* attention) {
  if (batch.stats_fingerprint == 0)
    throw std::invalid_argument("transformer_forward: batch has not been normalized");
  if (batch.stats_fingerprint != stats.fingerprint())
    throw std::invalid_argument(
        "transformer_forward: batch was normalized with different feature stats");
  ad::NoGradGuard ng;
  const Eigen::Index n_max = batch.n_max;
  ad::Mat<double> rows(static_cast<Eigen::Index>(batch.size()) * n_max, 5);
  std::vector<nn::ItemSpan> spans;
  spans.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    rows.middleRows(static_cast<Eigen::Index>(i) * n_max, n_max) = batch.x[i];
    spans.push_back({static_cast<Eigen::Index>(i) * n_max, n_max, &batch.mask[i]});
  }
  const Eigen::MatrixXd out =
      nn::transformer_apply(w, ad::Tensor<double>::constant(std::move(rows)), spans, attention)
          .value();
  std::vector<Eigen::VectorXd> result;
  result.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Eigen::VectorXd y = out.col(0).segment(static_cast<Eigen::Index>(i) * n_max, n_max);
    for (Eigen::Index r = 0; r < n_max; ++r)
      if (!batch.mask[i](r)) y(r) = 0.0;  // masked vertices produce exactly zero
    result.push_back(std::move(y));
  }
  return result;
}

}  // namespace

std::vector<Eigen::VectorXd> transformer_forward(const Checkpoint& ckpt, const DenseBatch& batch,
                                                 nn::AttentionMaps<double>* attention) {
  const auto weights = build_transformer<double>(ckpt);
  return padded_apply(weights, ckpt.stats, batch, attention);
}

Eigen::VectorXd predict_powers(const Checkpoint& ckpt, const FarmScenario& scenario) {
  const int n = static_cast<int>(scenario.size());
  if (ckpt.kind == ModelKind::transformer) {
    DenseBatch b = to_dense({scenario}, n);
    normalize(b, ckpt.stats);
    const auto weights = build_transformer<double>(ckpt);
    const Eigen::VectorXd y = padded_apply(weights, ckpt.stats, b, nullptr)[0];
    return denormalize_power(y, ckpt.stats);
  }
  const auto weights = build_gnn<double>(ckpt);
  FarmGraph g = build_directed_graph(scenario);
  normalize(g, ckpt.stats);
  ad::NoGradGuard ng;
  const Eigen::MatrixXd y = nn::gnn_apply(weights, g).value();
  return denormalize_power(Eigen::VectorXd(y.col(0)), ckpt.stats);
}

Metrics compute_metrics(const std::vector<Eigen::VectorXd>& predicted_w,
                        const std::vector<Eigen::VectorXd>& target_w, double power_scale) {
  if (predicted_w.size() != target_w.size() || predicted_w.empty())
    throw std::invalid_argument("compute_metrics: prediction/target count mismatch");
  Metrics m;
  double sum_sq = 0.0;
  long count = 0;
  double acc_sum = 0.0;
  m.min_rel_acc = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < predicted_w.size(); ++i) {
    const Eigen::VectorXd& p = predicted_w[i];
    const Eigen::VectorXd& t = target_w[i];
    if (p.size() != t.size())
      throw std::invalid_argument("compute_metrics: length mismatch in scenario " +
                                  std::to_string(i));
    sum_sq += ((p - t) / power_scale).squaredNorm();
    count += p.size();
    const double total_t = t.sum();
    double acc;
    if (total_t != 0.0)
      acc = 1.0 - std::abs(p.sum() - total_t) / total_t;
    else
      acc = p.sum() == 0.0 ? 1.0 : 0.0;
    acc_sum += acc;
    m.min_rel_acc = std::min(m.min_rel_acc, acc);
  }
  m.mse = sum_sq / static_cast<double>(count);
  m.mean_rel_acc = acc_sum / static_cast<double>(predicted_w.size());
  return m;
}

Metrics evaluate(const Checkpoint& ckpt, const std::vector<DatasetRecord>& records) {
  if (records.empty()) throw std::invalid_argument("evaluate: empty record set");
  std::vector<Eigen::VectorXd> preds, targets;
  preds.reserve(records.size());
  targets.reserve(records.size());
  if (ckpt.kind == ModelKind::transformer) {
    const auto weights = build_transformer<double>(ckpt);
    const int chunk = 64;
    for (std::size_t start = 0; start < records.size(); start += chunk) {
      std::vector<FarmScenario> scenarios;
      for (std::size_t i = start; i < std::min(records.size(), start + chunk); ++i)
        scenarios.push_back(records[i].scenario);
      DenseBatch b = to_dense(scenarios, 100);
      normalize(b, ckpt.stats);
      const auto ys = padded_apply(weights, ckpt.stats, b, nullptr);
      for (std::size_t k = 0; k < ys.size(); ++k) {
        const Eigen::Index n = records[start + k].scenario.size();
        preds.push_back(denormalize_power(Eigen::VectorXd(ys[k].head(n)), ckpt.stats));
      }
    }
  } else {
    const auto weights = build_gnn<double>(ckpt);
    ad::NoGradGuard ng;
    for (const auto& rec : records) {
      FarmGraph g = build_directed_graph(rec.scenario);
      normalize(g, ckpt.stats);
      const Eigen::MatrixXd y = nn::gnn_apply(weights, g).value();
      preds.push_back(denormalize_power(Eigen::VectorXd(y.col(0)), ckpt.stats));
    }
  }
  for (const auto& rec : records) targets.push_back(rec.powers);
  return compute_metrics(preds, targets, ckpt.stats.power_scale);
}

std::vector<std::tuple<int, int, double>> extract_attention(const Checkpoint& ckpt,
                                                            const FarmScenario& scenario,
                                                            double threshold) {
  if (ckpt.kind != ModelKind::transformer)
    throw std::invalid_argument("extract_attention: requires a transformer checkpoint");
  const int n = static_cast<int>(scenario.size());
  DenseBatch b = to_dense({scenario}, n);
  normalize(b, ckpt.stats);
  const auto weights = build_transformer<double>(ckpt);
  nn::AttentionMaps<double> maps;
  padded_apply(weights, ckpt.stats, b, &maps);
  const auto& last_block = maps[0].back();
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(n, n);
  for (const auto& head : last_block) avg += head;
  avg /= static_cast<double>(last_block.size());
  std::vector<std::tuple<int, int, double>> out;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (avg(i, j) > threshold) out.emplace_back(i, j, avg(i, j));
  return out;
}

// ---------------------------------------------------------------------------
// fitness backend

struct SurrogateEvaluator::Impl {
  ModelKind kind;
  FeatureStats stats;
  FarmScenario tmpl;
  int n_threads = 1;

  std::optional<nn::TransformerWeights<float>> tf;
  Eigen::MatrixXf base_feat;  // n x 5 normalized, yaw column overwritten per chromosome

  std::optional<nn::GnnWeights<double>> gnn;
  std::optional<FarmGraph> base_graph;  // normalized

  std::vector<double> eval_chunk_transformer(const std::vector<Eigen::VectorXd>& chroms,
                                             std::size_t begin, std::size_t end) const {
    ad::NoGradGuard ng;
    const Eigen::Index n = base_feat.rows();
    const std::size_t count = end - begin;
    ad::Mat<float> rows(static_cast<Eigen::Index>(count) * n, 5);
    std::vector<nn::ItemSpan> spans;
    spans.reserve(count);
    const float yaw_mean = static_cast<float>(stats.mean(2));
    const float yaw_std = static_cast<float>(stats.std(2));
    for (std::size_t c = 0; c < count; ++c) {
      const Eigen::Index at = static_cast<Eigen::Index>(c) * n;
      rows.middleRows(at, n) = base_feat;
      const Eigen::VectorXd& chrom = chroms[begin + c];
      for (Eigen::Index i = 0; i < n; ++i)
        rows(at + i, 2) = (static_cast<float>(chrom(i)) - yaw_mean) / yaw_std;
      spans.push_back({at, n, nullptr});
    }
    const ad::Mat<float> out =
        nn::transformer_apply(*tf, ad::Tensor<float>::constant(std::move(rows)), spans).value();
    std::vector<double> totals(count);
    for (std::size_t c = 0; c < count; ++c) {
      const Eigen::Index at = static_cast<Eigen::Index>(c) * n;
      double sum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) sum += static_cast<double>(out(at + i, 0));
      totals[c] = sum * stats.power_scale;
    }
    return totals;
  }

  double eval_one_gnn(const Eigen::VectorXd& chrom) const {
    ad::NoGradGuard ng;
    FarmGraph g = *base_graph;
    for (Eigen::Index i = 0; i < g.vertices.rows(); ++i)
      g.vertices(i, 2) = (chrom(i) - stats.mean(2)) / stats.std(2);
    const Eigen::MatrixXd y = nn::gnn_apply(*gnn, g).value();
    return y.col(0).sum() * stats.power_scale;
  }
};

SurrogateEvaluator::SurrogateEvaluator(const Checkpoint& ckpt, FarmScenario tmpl, int n_threads)
    : impl_(std::make_unique<Impl>()) {
  tmpl.validate();
  impl_->kind = ckpt.kind;
  impl_->stats = ckpt.stats;
  impl_->tmpl = std::move(tmpl);
  impl_->n_threads = n_threads > 0 ? n_threads : thread_cap();
  const int n = static_cast<int>(impl_->tmpl.size());
  if (ckpt.kind == ModelKind::transformer) {
    if (n > 100)
      throw std::invalid_argument("surrogate fitness: scenario exceeds the 100-turbine batch limit");
    impl_->tf = build_transformer<float>(ckpt);
    DenseBatch b = to_dense({impl_->tmpl}, n);
    normalize(b, ckpt.stats);
    impl_->base_feat = b.x[0].cast<float>();
  } else {
    impl_->gnn = build_gnn<double>(ckpt);
    FarmGraph g = build_directed_graph(impl_->tmpl);
    normalize(g, ckpt.stats);
    impl_->base_graph = std::move(g);
  }
}

SurrogateEvaluator::~SurrogateEvaluator() = default;

std::vector<double> SurrogateEvaluator::batched(const std::vector<Eigen::VectorXd>& chroms) const {
  if (chroms.empty()) return {};
  for (const auto& c : chroms)
    if (c.size() != impl_->tmpl.size())
      throw std::invalid_argument("surrogate fitness: chromosome length mismatch");
  if (impl_->kind == ModelKind::gnn) {
    std::vector<double> out(chroms.size());
    for (std::size_t i = 0; i < chroms.size(); ++i) out[i] = impl_->eval_one_gnn(chroms[i]);
    return out;
  }
  // stack sub-batches small enough to stay cache-resident; per-item results
  // do not depend on the chunking
  const Eigen::Index n = impl_->tmpl.size();
  const std::size_t rows_target = 256;
  const std::size_t chunk =
      std::max<std::size_t>(1, rows_target / static_cast<std::size_t>(n));
  const std::size_t n_chunks = (chroms.size() + chunk - 1) / chunk;
  std::vector<double> out(chroms.size());
  const int threads = std::min<int>(impl_->n_threads, static_cast<int>(n_chunks));
  std::atomic<std::size_t> next{0};
  auto worker_body = [&] {
    for (std::size_t c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1)) {
      const std::size_t begin = c * chunk;
      const std::size_t end = std::min(chroms.size(), begin + chunk);
      const auto part = impl_->eval_chunk_transformer(chroms, begin, end);
      std::copy(part.begin(), part.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
    }
  };
  if (threads <= 1) {
    worker_body();
    return out;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        worker_body();
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<double> SurrogateEvaluator::sequential(
    const std::vector<Eigen::VectorXd>& chroms) const {
  std::vector<double> out;
  out.reserve(chroms.size());
  for (const auto& c : chroms)
    if (c.size() != impl_->tmpl.size())
      throw std::invalid_argument("surrogate fitness: chromosome length mismatch");
  for (const auto& c : chroms) {
    if (impl_->kind == ModelKind::gnn)
      out.push_back(impl_->eval_one_gnn(c));
    else
      out.push_back(impl_->eval_chunk_transformer({c}, 0, 1)[0]);
  }
  return out;
}

FitnessFn SurrogateEvaluator::as_backend() const {
  return [this](const std::vector<Eigen::VectorXd>& chroms) { return batched(chroms); };
}

std::vector<double> surrogate_fitness(const Checkpoint& ckpt, const FarmScenario& tmpl,
                                      const std::vector<Eigen::VectorXd>& chromosomes,
                                      int n_threads) {
  return SurrogateEvaluator(ckpt, tmpl, n_threads).batched(chromosomes);
}

}  // namespace wakeforge
