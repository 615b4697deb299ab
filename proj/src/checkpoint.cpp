#include "wakeforge/checkpoint.hpp"

#include <json.hpp>

#include "wakeforge/io.hpp"

namespace wakeforge {

using json = nlohmann::json;

std::string to_string(ModelKind kind) {
  return kind == ModelKind::transformer ? "transformer" : "gnn";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "transformer") return ModelKind::transformer;
  if (name == "gnn") return ModelKind::gnn;
  throw std::invalid_argument("unknown model kind: " + name);
}

namespace {

json stats_to_json(const FeatureStats& s) {
  json j;
  j["mean"] = std::vector<double>(s.mean.data(), s.mean.data() + 5);
  j["std"] = std::vector<double>(s.std.data(), s.std.data() + 5);
  j["edge_mean"] = std::vector<double>(s.edge_mean.data(), s.edge_mean.data() + 2);
  j["edge_std"] = std::vector<double>(s.edge_std.data(), s.edge_std.data() + 2);
  j["power_scale"] = s.power_scale;
  return j;
}

FeatureStats stats_from_json(const json& j) {
  FeatureStats s;
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto std_ = j.at("std").get<std::vector<double>>();
  const auto emean = j.at("edge_mean").get<std::vector<double>>();
  const auto estd = j.at("edge_std").get<std::vector<double>>();
  if (mean.size() != 5 || std_.size() != 5 || emean.size() != 2 || estd.size() != 2)
    throw std::invalid_argument("checkpoint: malformed feature stats");
  for (int i = 0; i < 5; ++i) {
    s.mean(i) = mean[static_cast<std::size_t>(i)];
    s.std(i) = std_[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < 2; ++i) {
    s.edge_mean(i) = emean[static_cast<std::size_t>(i)];
    s.edge_std(i) = estd[static_cast<std::size_t>(i)];
  }
  s.power_scale = j.at("power_scale").get<double>();
  return s;
}

json transformer_cfg_to_json(const TransformerConfig& c) {
  return json{{"n_blocks", c.n_blocks},     {"n_heads", c.n_heads},
              {"d_model", c.d_model},       {"enc_hidden", c.enc_hidden},
              {"dec_hidden", c.dec_hidden}, {"ffn_hidden", c.ffn_hidden},
              {"dropout", c.dropout}};
}

TransformerConfig transformer_cfg_from_json(const json& j) {
  TransformerConfig c;
  c.n_blocks = j.at("n_blocks").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.enc_hidden = j.at("enc_hidden").get<int>();
  c.dec_hidden = j.at("dec_hidden").get<int>();
  c.ffn_hidden = j.at("ffn_hidden").get<int>();
  c.dropout = j.value("dropout", 0.0);
  c.validate();
  return c;
}

json gnn_cfg_to_json(const GnnConfig& c) {
  return json{{"n_blocks", c.n_blocks},
              {"mlp_hidden", c.mlp_hidden},
              {"latent_vertex", c.latent_vertex},
              {"latent_edge", c.latent_edge},
              {"latent_global", c.latent_global}};
}

GnnConfig gnn_cfg_from_json(const json& j) {
  GnnConfig c;
  c.n_blocks = j.at("n_blocks").get<int>();
  c.mlp_hidden = j.at("mlp_hidden").get<int>();
  c.latent_vertex = j.at("latent_vertex").get<int>();
  c.latent_edge = j.at("latent_edge").get<int>();
  c.latent_global = j.at("latent_global").get<int>();
  c.validate();
  return c;
}

}  // namespace

namespace {

json matrix_to_json(const Eigen::MatrixXd& mat) {
  json w;
  w["shape"] = {mat.rows(), mat.cols()};
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(mat.size()));
  for (Eigen::Index r = 0; r < mat.rows(); ++r)
    for (Eigen::Index c = 0; c < mat.cols(); ++c) data.push_back(mat(r, c));
  w["data"] = std::move(data);
  return w;
}

Eigen::MatrixXd matrix_from_json(const json& w) {
  const auto shape = w.at("shape").get<std::vector<Eigen::Index>>();
  const auto data = w.at("data").get<std::vector<double>>();
  if (shape.size() != 2 || static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1])
    throw std::invalid_argument("checkpoint: malformed tensor payload");
  Eigen::MatrixXd mat(shape[0], shape[1]);
  std::size_t at = 0;
  for (Eigen::Index r = 0; r < shape[0]; ++r)
    for (Eigen::Index c = 0; c < shape[1]; ++c) mat(r, c) = data[at++];
  return mat;
}

}  // namespace

json train_state_to_json(const AdamW<double>& opt, long schedule_step) {
  json j;
  j["step_count"] = opt.step_count();
  j["schedule_step"] = schedule_step;
  j["beta1"] = opt.options().beta1;
  j["beta2"] = opt.options().beta2;
  j["eps"] = opt.options().eps;
  j["weight_decay"] = opt.options().weight_decay;
  json m = json::array(), v = json::array();
  for (const auto& mat : opt.first_moments()) m.push_back(matrix_to_json(mat));
  for (const auto& mat : opt.second_moments()) v.push_back(matrix_to_json(mat));
  j["m"] = std::move(m);
  j["v"] = std::move(v);
  return j;
}

void train_state_from_json(const json& j, AdamW<double>& opt, long& schedule_step) {
  std::vector<Eigen::MatrixXd> m, v;
  for (const auto& w : j.at("m")) m.push_back(matrix_from_json(w));
  for (const auto& w : j.at("v")) v.push_back(matrix_from_json(w));
  opt.set_state(std::move(m), std::move(v), j.at("step_count").get<long>());
  schedule_step = j.at("schedule_step").get<long>();
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json j;
  j["format_version"] = 1;
  j["kind"] = to_string(ckpt.kind);
  if (ckpt.kind == ModelKind::transformer)
    j["transformer"] = transformer_cfg_to_json(ckpt.transformer);
  else
    j["gnn"] = gnn_cfg_to_json(ckpt.gnn);
  j["stats"] = stats_to_json(ckpt.stats);
  json weights = json::object();
  for (const auto& [name, mat] : ckpt.weights) weights[name] = matrix_to_json(mat);
  j["weights"] = std::move(weights);
  j["meta"] = json{{"seed", ckpt.seed},
                   {"steps_trained", ckpt.steps_trained},
                   {"best_val_mse", ckpt.best_val_mse},
                   {"build", ckpt.build.empty() ? WAKEFORGE_GIT_DESCRIBE : ckpt.build}};
  io::write_json_file(path, j, -1);
}

Checkpoint load_checkpoint(const std::string& path) {
  const json j = io::read_json_file(path);
  if (j.value("format_version", 0) != 1)
    throw std::invalid_argument("checkpoint: unsupported format version in " + path);
  Checkpoint ckpt;
  ckpt.kind = model_kind_from_string(j.at("kind").get<std::string>());
  if (ckpt.kind == ModelKind::transformer)
    ckpt.transformer = transformer_cfg_from_json(j.at("transformer"));
  else
    ckpt.gnn = gnn_cfg_from_json(j.at("gnn"));
  ckpt.stats = stats_from_json(j.at("stats"));
  for (const auto& [name, w] : j.at("weights").items()) {
    try {
      ckpt.weights[name] = matrix_from_json(w);
    } catch (const std::exception&) {
      throw std::invalid_argument("checkpoint: malformed tensor " + name);
    }
  }
  const json meta = j.value("meta", json::object());
  ckpt.seed = meta.value("seed", 0ull);
  ckpt.steps_trained = meta.value("steps_trained", 0l);
  ckpt.best_val_mse = meta.value("best_val_mse", std::numeric_limits<double>::quiet_NaN());
  ckpt.build = meta.value("build", "");
  return ckpt;
}

}  // namespace wakeforge
