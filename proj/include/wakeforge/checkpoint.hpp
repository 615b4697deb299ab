#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "wakeforge/graph.hpp"
#include "wakeforge/nn.hpp"
#include "wakeforge/optimizer.hpp"

namespace wakeforge {

enum class ModelKind { transformer, gnn };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// Self-contained model bundle: weights, the feature statistics they were
// trained with, the architecture config and provenance metadata.
struct Checkpoint {
  ModelKind kind = ModelKind::transformer;
  TransformerConfig transformer;
  GnnConfig gnn;
  FeatureStats stats;
  std::map<std::string, Eigen::MatrixXd> weights;

  std::uint64_t seed = 0;
  long steps_trained = 0;
  double best_val_mse = std::numeric_limits<double>::quiet_NaN();
  std::string build;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Optimizer moments plus the schedule position, for resumable training.
nlohmann::json train_state_to_json(const AdamW<double>& opt, long schedule_step);
void train_state_from_json(const nlohmann::json& j, AdamW<double>& opt, long& schedule_step);

template <class S>
void load_named_params(const std::map<std::string, Eigen::MatrixXd>& values,
                       const std::vector<std::pair<std::string, ad::Tensor<S>>>& params) {
  for (const auto& [name, tensor] : params) {
    const auto it = values.find(name);
    if (it == values.end())
      throw std::invalid_argument("checkpoint: missing parameter " + name);
    if (it->second.rows() != tensor.rows() || it->second.cols() != tensor.cols())
      throw std::invalid_argument("checkpoint: shape mismatch for " + name);
    const_cast<ad::Tensor<S>&>(tensor).value_mut() = it->second.template cast<S>();
  }
}

template <class S>
std::map<std::string, Eigen::MatrixXd> export_named_params(
    const std::vector<std::pair<std::string, ad::Tensor<S>>>& params) {
  std::map<std::string, Eigen::MatrixXd> out;
  for (const auto& [name, tensor] : params) out[name] = tensor.value().template cast<double>();
  return out;
}

template <class S>
nn::TransformerWeights<S> build_transformer(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::transformer)
    throw std::invalid_argument("checkpoint: not a transformer model");
  auto w = nn::transformer_init<S>(ckpt.transformer, 0);
  load_named_params<S>(ckpt.weights, w.named_params());
  return w;
}

template <class S>
nn::GnnWeights<S> build_gnn(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::gnn)
    throw std::invalid_argument("checkpoint: not a message-passing model");
  auto w = nn::gnn_init<S>(ckpt.gnn, 0);
  load_named_params<S>(ckpt.weights, w.named_params());
  return w;
}

}  // namespace wakeforge
