#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "test_helpers.hpp"
#include "wakeforge/graph.hpp"
#include "wakeforge/io.hpp"
#include "wakeforge/wind_frame.hpp"

using namespace wakeforge;

namespace {

// Brute-force oracle over all ordered pairs, computed with compass bearings
// rather than the wind-aligned frame.
std::set<std::pair<int, int>> edge_oracle(const FarmScenario& sc, double cone_deg) {
  std::set<std::pair<int, int>> edges;
  const int n = static_cast<int>(sc.size());
  const double dir = sc.conditions.wind_direction_deg;
  // compass bearing the flow moves toward
  const double downwind_bearing = std::fmod(dir + 180.0, 360.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double de = sc.positions(j, 0) - sc.positions(i, 0);
      const double dn = sc.positions(j, 1) - sc.positions(i, 1);
      const double bearing = rad2deg(std::atan2(de, dn));  // compass: 0=N, 90=E
      double diff = std::fmod(bearing - downwind_bearing, 360.0);
      if (diff > 180.0) diff -= 360.0;
      if (diff < -180.0) diff += 360.0;
      if (std::abs(diff) < 90.0 && std::abs(diff) <= cone_deg) {
        // strictly downstream means a positive projection on the flow
        const Eigen::Vector2d d = flow_direction(dir);
        if (de * d.x() + dn * d.y() > 0.0) edges.insert({i, j});
      }
    }
  }
  return edges;
}

FarmScenario line_scenario(double wind_dir, std::initializer_list<std::pair<double, double>> pts) {
  FarmScenario sc;
  sc.spec = vestas_v80();
  sc.conditions = {10.0, wind_dir, 0.08};
  sc.positions.resize(static_cast<Eigen::Index>(pts.size()), 2);
  Eigen::Index r = 0;
  for (const auto& [x, y] : pts) {
    sc.positions(r, 0) = x;
    sc.positions(r, 1) = y;
    ++r;
  }
  sc.yaw_deg = Eigen::VectorXd::Zero(sc.positions.rows());
  return sc;
}

}  // namespace

TEST_CASE("three collinear turbines chain downstream") {
  // wind from the north; turbines march south
  const FarmScenario sc = line_scenario(0.0, {{0.0, 0.0}, {0.0, -400.0}, {0.0, -800.0}});
  const FarmGraph g = build_directed_graph(sc);
  const std::set<std::pair<int, int>> expect = {{0, 1}, {0, 2}, {1, 2}};
  std::set<std::pair<int, int>> got(g.edges.begin(), g.edges.end());
  CHECK(got == expect);
  CHECK(g.n_edges() == 3);
}

TEST_CASE("abreast turbines get no edge") {
  const FarmScenario sc = line_scenario(0.0, {{0.0, 0.0}, {400.0, 0.0}});
  CHECK(build_directed_graph(sc).n_edges() == 0);
}

TEST_CASE("a turbine just outside the cone is not connected") {
  // wind from west, flow toward +east; dy/dx = tan(16 deg) > tan(15 deg)
  const double dx = 800.0;
  const double dy16 = dx * std::tan(deg2rad(16.0));
  const double dy14 = dx * std::tan(deg2rad(14.0));
  const FarmScenario out_of_cone = line_scenario(270.0, {{0.0, 0.0}, {dx, dy16}});
  CHECK(build_directed_graph(out_of_cone).n_edges() == 0);
  const FarmScenario in_cone = line_scenario(270.0, {{0.0, 0.0}, {dx, dy14}});
  CHECK(build_directed_graph(in_cone).n_edges() == 1);
}

TEST_CASE("edge sets equal the brute-force oracle on random farms") {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 5 + rng.uniform_int(46);
    const FarmScenario sc = wftest::random_farm(rng, n);
    const FarmGraph g = build_directed_graph(sc);
    std::set<std::pair<int, int>> got(g.edges.begin(), g.edges.end());
    CHECK(got == edge_oracle(sc, 15.0));

    // asymmetry: no edge coexists with its reverse
    for (const auto& [s, d] : got) CHECK(got.count({d, s}) == 0);
  }
}

TEST_CASE("edge features are the relative wind-frame offsets") {
  const FarmScenario sc = line_scenario(270.0, {{0.0, 0.0}, {500.0, 20.0}});
  const FarmGraph g = build_directed_graph(sc);
  REQUIRE(g.n_edges() == 1);
  CHECK(g.edges[0] == std::pair<int, int>{0, 1});
  // wind from west: streamwise = east, spanwise offset 20 to the north side
  CHECK(g.edge_features(0, 1) == doctest::Approx(500.0).epsilon(1e-12));
  CHECK(std::abs(g.edge_features(0, 0)) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(g.globals(0) == 10.0);
  CHECK(g.globals(1) == 0.08);
}

TEST_CASE("exact streamwise ties produce no edge") {
  const FarmScenario sc = line_scenario(0.0, {{0.0, 0.0}, {100.0, 0.0}, {200.0, 0.0}});
  CHECK(build_directed_graph(sc).n_edges() == 0);
}

TEST_CASE("permuting turbines relabels the graph consistently") {
  Rng rng(32);
  const FarmScenario sc = wftest::random_farm(rng, 8);
  const FarmGraph g = build_directed_graph(sc);
  const std::vector<int> perm = {3, 1, 7, 0, 5, 2, 6, 4};
  FarmScenario permuted = sc;
  for (int i = 0; i < 8; ++i) {
    permuted.positions.row(i) = sc.positions.row(perm[static_cast<std::size_t>(i)]);
    permuted.yaw_deg(i) = sc.yaw_deg(perm[static_cast<std::size_t>(i)]);
  }
  const FarmGraph h = build_directed_graph(permuted);
  REQUIRE(h.n_edges() == g.n_edges());
  // inverse map: where did original vertex v land?
  std::vector<int> where(8);
  for (int i = 0; i < 8; ++i) where[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
  std::set<std::pair<int, int>> relabeled;
  for (const auto& [s, d] : g.edges)
    relabeled.insert({where[static_cast<std::size_t>(s)], where[static_cast<std::size_t>(d)]});
  std::set<std::pair<int, int>> got(h.edges.begin(), h.edges.end());
  CHECK(got == relabeled);
  for (int i = 0; i < 8; ++i)
    CHECK((h.vertices.row(i) - g.vertices.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("to_dense pads, masks and broadcasts the globals") {
  Rng rng(33);
  const FarmScenario sc = wftest::random_farm(rng, 2);
  const DenseBatch b = to_dense({sc});
  REQUIRE(b.size() == 1);
  CHECK(b.n_max == 100);
  CHECK(b.x[0].rows() == 100);
  CHECK(b.x[0].cols() == 5);
  CHECK(b.n_real[0] == 2);
  CHECK(b.mask[0].head(2).all());
  CHECK(b.mask[0].count() == 2);
  for (Eigen::Index r = 2; r < 100; ++r)
    CHECK(b.x[0].row(r).cwiseAbs().maxCoeff() == 0.0);
  for (int r = 0; r < 2; ++r) {
    CHECK(b.x[0](r, 3) == sc.conditions.wind_speed);
    CHECK(b.x[0](r, 4) == sc.conditions.turbulence_intensity);
  }

  // dense/sparse agreement on the first three columns
  const FarmGraph g = build_directed_graph(sc);
  CHECK((b.x[0].topLeftCorner(2, 3) - g.vertices).cwiseAbs().maxCoeff() < 1e-12);

  FarmScenario big = wftest::random_farm(rng, 5);
  CHECK_THROWS_AS(to_dense({big}, 4), std::invalid_argument);
}

TEST_CASE("rotating layout and wind together leaves dense features unchanged") {
  Rng rng(34);
  for (int trial = 0; trial < 10; ++trial) {
    const FarmScenario sc = wftest::random_farm(rng, 6);
    const double phi_deg = rng.uniform(0.0, 360.0);
    const double phi = deg2rad(phi_deg);
    Eigen::Matrix2d rot;
    rot << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
    FarmScenario rotated = sc;
    rotated.positions = (rot * sc.positions.transpose()).transpose();
    rotated.conditions.wind_direction_deg = sc.conditions.wind_direction_deg - phi_deg;
    const DenseBatch a = to_dense({sc}, 6);
    const DenseBatch b = to_dense({rotated}, 6);
    CHECK((a.x[0] - b.x[0]).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("feature stats: zero variance is an error, round trips are exact") {
  Rng rng(35);
  std::vector<FarmScenario> train;
  for (int i = 0; i < 20; ++i) train.push_back(wftest::random_farm(rng, 4 + rng.uniform_int(5)));
  const FeatureStats stats = fit_stats(train);
  for (int f = 0; f < 5; ++f) CHECK(stats.std(f) > 0.0);
  CHECK(stats.power_scale == vestas_v80().rated_power);

  // normalized real rows have roughly zero mean and unit variance
  DenseBatch batch = to_dense(train);
  normalize(batch, stats);
  CHECK(batch.stats_fingerprint == stats.fingerprint());
  double sum = 0.0, sumsq = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (int r = 0; r < batch.n_real[i]; ++r) {
      sum += batch.x[i](r, 0);
      sumsq += batch.x[i](r, 0) * batch.x[i](r, 0);
      ++count;
    }
  const double mean = sum / static_cast<double>(count);
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(sumsq / static_cast<double>(count) - mean * mean - 1.0) < 1e-9);

  // power round trip
  for (int i = 0; i < 50; ++i) {
    const double w = rng.uniform(0.0, 2.5e6);
    CHECK(std::abs(denormalize_power(normalize_power(w, stats), stats) - w) <= 1e-6 * w);
  }

  // constant-yaw training set: yaw column has zero variance
  std::vector<FarmScenario> flat = train;
  for (auto& sc : flat) sc.yaw_deg.setZero();
  CHECK_THROWS_AS(fit_stats(flat), std::invalid_argument);
}

TEST_CASE("graph JSON round-trips exactly") {
  Rng rng(37);
  const FarmScenario sc = wftest::random_farm(rng, 7);
  const FarmGraph g = build_directed_graph(sc);
  const FarmGraph back = wakeforge::io::graph_from_json(wakeforge::io::graph_to_json(g));
  CHECK((back.vertices.array() == g.vertices.array()).all());
  CHECK(back.edges == g.edges);
  if (g.n_edges() > 0)
    CHECK((back.edge_features.array() == g.edge_features.array()).all());
  CHECK((back.globals.array() == g.globals.array()).all());
}

TEST_CASE("synthetic standard-normal column recovers unit stats") {
  // hand-built scenarios whose spanwise coordinates follow a known sample
  Rng rng(36);
  std::vector<FarmScenario> scenarios;
  for (int i = 0; i < 200; ++i) scenarios.push_back(wftest::random_farm(rng, 3));
  const FeatureStats stats = fit_stats(scenarios);
  DenseBatch batch = to_dense(scenarios, 3);
  normalize(batch, stats);
  // after z-scoring, the pooled spanwise column is standard normal-ish
  double sum = 0.0, sumsq = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (int r = 0; r < 3; ++r) {
      sum += batch.x[i](r, 1);
      sumsq += batch.x[i](r, 1) * batch.x[i](r, 1);
      ++n;
    }
  CHECK(std::abs(sum / static_cast<double>(n)) < 1e-9);
  CHECK(sumsq / static_cast<double>(n) == doctest::Approx(1.0).epsilon(1e-6));
}
