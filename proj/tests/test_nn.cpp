#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_helpers.hpp"
#include "wakeforge/checkpoint.hpp"
#include "wakeforge/nn.hpp"
#include "wakeforge/surrogate.hpp"

using namespace wakeforge;
using Mat = ad::Mat<double>;

namespace {

TransformerConfig tiny_tf() {
  TransformerConfig cfg;
  cfg.n_blocks = 2;
  cfg.n_heads = 2;
  cfg.d_model = 16;
  cfg.enc_hidden = 24;
  cfg.dec_hidden = 24;
  cfg.ffn_hidden = 24;
  return cfg;
}

GnnConfig tiny_gnn() {
  GnnConfig cfg;
  cfg.n_blocks = 2;
  cfg.mlp_hidden = 12;
  cfg.latent_vertex = 8;
  cfg.latent_edge = 8;
  cfg.latent_global = 8;
  return cfg;
}

Checkpoint fake_transformer_checkpoint(const TransformerConfig& cfg, const FeatureStats& stats,
                                       std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.kind = ModelKind::transformer;
  ckpt.transformer = cfg;
  ckpt.stats = stats;
  const auto w = nn::transformer_init<double>(cfg, seed);
  ckpt.weights = export_named_params<double>(w.named_params());
  return ckpt;
}

FeatureStats stats_from(std::vector<FarmScenario>& pool) { return fit_stats(pool); }

}  // namespace

TEST_CASE("transformer: permutation equivariance, padding invariance, masked outputs") {
  Rng rng(51);
  std::vector<FarmScenario> pool;
  for (int i = 0; i < 30; ++i) pool.push_back(wftest::random_farm(rng, 3 + rng.uniform_int(6)));
  const FeatureStats stats = stats_from(pool);
  const Checkpoint ckpt = fake_transformer_checkpoint(tiny_tf(), stats, 7);

  const FarmScenario sc = pool[0];
  const int n = static_cast<int>(sc.size());

  // reference: trimmed batch
  DenseBatch trimmed = to_dense({sc}, n);
  normalize(trimmed, stats);
  const Eigen::VectorXd y_ref = transformer_forward(ckpt, trimmed)[0];

  SUBCASE("padding to the full batch width changes nothing real") {
    DenseBatch padded = to_dense({sc}, 100);
    normalize(padded, stats);
    const Eigen::VectorXd y_pad = transformer_forward(ckpt, padded)[0];
    for (int i = 0; i < n; ++i) CHECK(std::abs(y_pad(i) - y_ref(i)) < 1e-10);
    for (int i = n; i < 100; ++i) CHECK(y_pad(i) == 0.0);  // masked vertices produce zero
  }

  SUBCASE("permuting real vertices permutes outputs identically") {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (int k = n - 1; k > 0; --k)
      std::swap(perm[static_cast<std::size_t>(k)],
                perm[static_cast<std::size_t>(rng.uniform_int(k + 1))]);
    FarmScenario shuffled = sc;
    for (int i = 0; i < n; ++i) {
      shuffled.positions.row(i) = sc.positions.row(perm[static_cast<std::size_t>(i)]);
      shuffled.yaw_deg(i) = sc.yaw_deg(perm[static_cast<std::size_t>(i)]);
    }
    DenseBatch batch = to_dense({shuffled}, n);
    normalize(batch, stats);
    const Eigen::VectorXd y_perm = transformer_forward(ckpt, batch)[0];
    for (int i = 0; i < n; ++i)
      CHECK(std::abs(y_perm(i) - y_ref(perm[static_cast<std::size_t>(i)])) < 1e-12);
  }

  SUBCASE("attention rows over real keys sum to one") {
    DenseBatch padded = to_dense({sc}, 100);
    normalize(padded, stats);
    nn::AttentionMaps<double> maps;
    transformer_forward(ckpt, padded, &maps);
    REQUIRE(maps.size() == 1);
    REQUIRE(maps[0].size() == 2);  // blocks
    for (const auto& block : maps[0]) {
      REQUIRE(block.size() == 2);  // heads
      for (const Mat& head : block)
        for (Eigen::Index r = 0; r < head.rows(); ++r)
          CHECK(std::abs(head.row(r).sum() - 1.0) < 1e-6);
    }
  }

  SUBCASE("stats fingerprint gates the forward pass") {
    DenseBatch raw = to_dense({sc}, n);  // never normalized
    CHECK_THROWS_WITH_AS(transformer_forward(ckpt, raw), doctest::Contains("normalized"),
                         std::invalid_argument);
    DenseBatch wrong = to_dense({sc}, n);
    FeatureStats other = stats;
    other.mean(0) += 1.0;
    normalize(wrong, other);
    CHECK_THROWS_AS(transformer_forward(ckpt, wrong), std::invalid_argument);
  }
}

TEST_CASE("gnn: relabeling equivariance is exact, no-edge graphs stay local") {
  Rng rng(52);
  std::vector<FarmScenario> pool;
  for (int i = 0; i < 30; ++i) pool.push_back(wftest::random_farm(rng, 3 + rng.uniform_int(6)));
  const FeatureStats stats = stats_from(pool);
  const auto weights = nn::gnn_init<double>(tiny_gnn(), 9);

  SUBCASE("relabeling the graph gives bitwise equal outputs") {
    const FarmScenario sc = pool[1];
    const int n = static_cast<int>(sc.size());
    FarmGraph g = build_directed_graph(sc);
    normalize(g, stats);
    ad::NoGradGuard ng;
    const Mat y = nn::gnn_apply(weights, g).value();

    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (int k = n - 1; k > 0; --k)
      std::swap(perm[static_cast<std::size_t>(k)],
                perm[static_cast<std::size_t>(rng.uniform_int(k + 1))]);
    std::vector<int> where(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      where[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;

    FarmGraph h = g;
    for (int i = 0; i < n; ++i)
      h.vertices.row(i) = g.vertices.row(perm[static_cast<std::size_t>(i)]);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      const std::size_t rot = (e + 1) % g.edges.size();  // new edge-list order
      h.edges[e] = {where[static_cast<std::size_t>(g.edges[rot].first)],
                    where[static_cast<std::size_t>(g.edges[rot].second)]};
      h.edge_features.row(static_cast<Eigen::Index>(e)) =
          g.edge_features.row(static_cast<Eigen::Index>(rot));
    }
    const Mat z = nn::gnn_apply(weights, h).value();
    for (int i = 0; i < n; ++i)
      CHECK(z(i, 0) == y(perm[static_cast<std::size_t>(i)], 0));
  }

  SUBCASE("edge-free graphs reduce to per-vertex functions") {
    // wind from the east, turbines sharing the east coordinate: abreast, no
    // edges, so each output depends only on its own features and the globals
    FarmScenario sc = pool[2];
    sc.positions.resize(2, 2);
    sc.positions << 0.0, 0.0, 0.0, 600.0;
    sc.conditions.wind_direction_deg = 90.0;
    sc.yaw_deg.resize(2);
    sc.yaw_deg << 5.0, -10.0;
    FarmGraph g = build_directed_graph(sc);
    REQUIRE(g.n_edges() == 0);
    normalize(g, stats);
    ad::NoGradGuard ng;
    const Mat y = nn::gnn_apply(weights, g).value();

    // swapping the two vertices swaps outputs exactly (no message paths)
    FarmScenario swapped = sc;
    swapped.positions.row(0) = sc.positions.row(1);
    swapped.positions.row(1) = sc.positions.row(0);
    std::swap(swapped.yaw_deg(0), swapped.yaw_deg(1));
    FarmGraph h = build_directed_graph(swapped);
    normalize(h, stats);
    const Mat z = nn::gnn_apply(weights, h).value();
    CHECK(z(0, 0) == y(1, 0));
    CHECK(z(1, 0) == y(0, 0));
  }
}

TEST_CASE("gnn hand-traced two-vertex forward matches an independent evaluation") {
  // one block, every MLP evaluated with plain Eigen arithmetic in the test
  GnnConfig cfg;
  cfg.n_blocks = 1;
  cfg.mlp_hidden = 4;
  cfg.latent_vertex = 3;
  cfg.latent_edge = 3;
  cfg.latent_global = 3;
  auto w = nn::gnn_init<double>(cfg, 123);

  FarmGraph g;
  g.vertices.resize(2, 3);
  g.vertices << 0.1, -0.4, 0.9, -0.2, 0.8, 0.3;
  g.edges = {{0, 1}};
  g.edge_features.resize(1, 2);
  g.edge_features << 0.25, 1.5;
  g.globals << 0.6, -0.1;

  ad::NoGradGuard ng;
  const Mat got = nn::gnn_apply(w, g).value();

  // independent trace
  auto gelu_ref = [](const Mat& x) {
    return Mat(x.unaryExpr(
        [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }));
  };
  auto mlp_ref = [&](const nn::Mlp2<double>& m, const Mat& x) {
    Mat h = (x * m.l1.w.value()).rowwise() + m.l1.b.value().row(0);
    h = gelu_ref(h);
    return Mat((h * m.l2.w.value()).rowwise() + m.l2.b.value().row(0));
  };

  // canonical order sorts vertex 1 (-0.2, ...) before vertex 0 (0.1, ...)
  Mat vmat(2, 3);
  vmat.row(0) = g.vertices.row(1);
  vmat.row(1) = g.vertices.row(0);
  const int src = 1, dst = 0;  // edge 0 -> 1 in canonical indices
  Mat v = mlp_ref(w.enc_vertex, vmat);
  Mat e = mlp_ref(w.enc_edge, g.edge_features);
  Mat u = mlp_ref(w.enc_global, g.globals.transpose());

  Mat edge_in(1, 3 + 3 + 3 + 3);
  edge_in << e.row(0), v.row(src), v.row(dst), u.row(0);
  e = mlp_ref(w.blocks[0].edge_mlp, edge_in);

  Mat incoming = Mat::Zero(2, 3);
  incoming.row(dst) = e.row(0);
  Mat vertex_in(2, 9);
  vertex_in << incoming, v, u.replicate(2, 1);
  v = mlp_ref(w.blocks[0].vertex_mlp, vertex_in);

  Mat global_in(1, 9);
  global_in << v.colwise().mean(), e.colwise().mean(), u;
  u = mlp_ref(w.blocks[0].global_mlp, global_in);

  const Mat decoded = mlp_ref(w.decoder, v);
  CHECK(std::abs(got(0, 0) - decoded(1, 0)) < 1e-12);  // original vertex 0 is canonical 1
  CHECK(std::abs(got(1, 0) - decoded(0, 0)) < 1e-12);
}

TEST_CASE("packed attention equals per-item attention composition") {
  Rng rng(56);
  const int d = 12, n_heads = 3;
  auto rnd = [&rng](Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
  };
  nn::MhaWeights<double> w{ad::Tensor<double>::param(rnd(d, d)),
                           ad::Tensor<double>::param(rnd(d, d)),
                           ad::Tensor<double>::param(rnd(d, d)),
                           ad::Tensor<double>::param(rnd(d, d)), n_heads};
  const std::vector<Eigen::Index> counts = {4, 7, 3};
  Eigen::Index total = 14;
  const Mat rows = rnd(total, d);
  std::vector<nn::ItemSpan> spans;
  nn::KeyMask mask1 = nn::KeyMask::Constant(7, true);
  mask1(2) = false;
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    spans.push_back({at, counts[i], i == 1 ? &mask1 : nullptr});
    at += counts[i];
  }
  ad::NoGradGuard ng;
  const Mat packed =
      nn::multi_head_attention_packed(ad::Tensor<double>::constant(rows), w, spans, 0).value();
  at = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const Mat item = rows.middleRows(at, counts[i]);
    const Mat ref =
        nn::multi_head_attention(ad::Tensor<double>::constant(item), w, spans[i].key_mask)
            .value();
    CHECK((packed.middleRows(at, counts[i]) - ref).cwiseAbs().maxCoeff() < 1e-12);
    at += counts[i];
  }
}

TEST_CASE("full-loss gradient of a small transformer batch") {
  Rng rng(53);
  std::vector<FarmScenario> pool;
  for (int i = 0; i < 8; ++i) pool.push_back(wftest::random_farm(rng, 3 + rng.uniform_int(3)));
  const FeatureStats stats = fit_stats(pool);

  TransformerConfig cfg = tiny_tf();
  cfg.n_blocks = 2;
  cfg.d_model = 16;
  cfg.enc_hidden = 12;
  cfg.dec_hidden = 12;
  cfg.ffn_hidden = 12;
  auto w = nn::transformer_init<double>(cfg, 3);

  // three scenarios stacked
  std::vector<Eigen::MatrixXd> feats;
  Eigen::Index total = 0;
  for (int i = 0; i < 3; ++i) {
    DenseBatch b = to_dense({pool[static_cast<std::size_t>(i)]},
                            static_cast<int>(pool[static_cast<std::size_t>(i)].size()));
    normalize(b, stats);
    feats.push_back(b.x[0]);
    total += b.x[0].rows();
  }
  Mat rows(total, 5);
  std::vector<nn::ItemSpan> spans;
  Eigen::Index at = 0;
  for (const auto& f : feats) {
    rows.middleRows(at, f.rows()) = f;
    spans.push_back({at, f.rows(), nullptr});
    at += f.rows();
  }
  const Mat target = Mat::Constant(total, 1, 0.3);

  const auto f = [&] {
    return ad::mse_loss(nn::transformer_apply(w, ad::Tensor<double>::constant(rows), spans),
                        target);
  };
  const double err = ad::grad_check<double>(f, w.params());
  MESSAGE("transformer full-loss grad err: " << err);
  CHECK(err < 1e-4);
}

TEST_CASE("full-loss gradient of a small graph-network batch") {
  Rng rng(54);
  std::vector<FarmScenario> pool;
  for (int i = 0; i < 6; ++i) pool.push_back(wftest::random_farm(rng, 4));
  const FeatureStats stats = fit_stats(pool);
  auto w = nn::gnn_init<double>(tiny_gnn(), 5);

  FarmGraph g = build_directed_graph(pool[0]);
  normalize(g, stats);
  const Mat target = Mat::Constant(g.n_vertices(), 1, 0.25);
  const auto f = [&] { return ad::mse_loss(nn::gnn_apply(w, g), target); };
  const double err = ad::grad_check<double>(f, w.params());
  MESSAGE("gnn full-loss grad err: " << err);
  CHECK(err < 1e-4);
}

TEST_CASE("checkpoint save/load round-trips weights exactly") {
  Rng rng(55);
  std::vector<FarmScenario> pool;
  for (int i = 0; i < 10; ++i) pool.push_back(wftest::random_farm(rng, 4));
  const FeatureStats stats = fit_stats(pool);
  Checkpoint ckpt = fake_transformer_checkpoint(tiny_tf(), stats, 77);
  ckpt.seed = 77;
  ckpt.steps_trained = 1234;
  ckpt.best_val_mse = 0.0042;

  const std::string path = "ckpt_roundtrip_test.json";
  save_checkpoint(path, ckpt);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.kind == ModelKind::transformer);
  CHECK(back.transformer.d_model == ckpt.transformer.d_model);
  CHECK(back.seed == 77);
  CHECK(back.steps_trained == 1234);
  CHECK(back.stats.fingerprint() == stats.fingerprint());
  REQUIRE(back.weights.size() == ckpt.weights.size());
  for (const auto& [name, mat] : ckpt.weights) {
    REQUIRE(back.weights.count(name) == 1);
    CHECK((back.weights.at(name).array() == mat.array()).all());
  }
  std::remove(path.c_str());
}
