#include "wakeforge/graph.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "wakeforge/wind_frame.hpp"

namespace wakeforge {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const double* data, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &data[i], sizeof(bits));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffull;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

}  // namespace

std::uint64_t FeatureStats::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a(h, mean.data(), 5);
  h = fnv1a(h, std.data(), 5);
  h = fnv1a(h, edge_mean.data(), 2);
  h = fnv1a(h, edge_std.data(), 2);
  h = fnv1a(h, &power_scale, 1);
  return h == 0 ? 1 : h;
}

Eigen::MatrixXd wind_aligned_features(const FarmScenario& sc) {
  Eigen::MatrixX2d centred = sc.positions;
  centred.rowwise() -= sc.positions.colwise().mean();
  const Eigen::MatrixX2d aligned = to_wind_frame(centred, sc.conditions.wind_direction_deg);
  Eigen::MatrixXd feats(sc.size(), 3);
  feats.col(0) = aligned.col(1);  // spanwise
  feats.col(1) = aligned.col(0);  // streamwise
  feats.col(2) = sc.yaw_deg;
  return feats;
}

FarmGraph build_directed_graph(const FarmScenario& sc, double cone_half_angle_deg) {
  sc.validate();
  FarmGraph g;
  g.vertices = wind_aligned_features(sc);
  g.globals = {sc.conditions.wind_speed, sc.conditions.turbulence_intensity};
  const Eigen::Index n = sc.size();
  std::vector<double> espan, estream;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dstream = g.vertices(j, 1) - g.vertices(i, 1);
      if (!(dstream > 0.0)) continue;  // strictly downstream only; ties get no edge
      const double dspan = g.vertices(j, 0) - g.vertices(i, 0);
      const double angle = rad2deg(std::atan2(std::abs(dspan), dstream));
      if (angle <= cone_half_angle_deg) {
        g.edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
        espan.push_back(dspan);
        estream.push_back(dstream);
      }
    }
  }
  g.edge_features.resize(static_cast<Eigen::Index>(g.edges.size()), 2);
  for (Eigen::Index e = 0; e < g.edge_features.rows(); ++e) {
    g.edge_features(e, 0) = espan[static_cast<std::size_t>(e)];
    g.edge_features(e, 1) = estream[static_cast<std::size_t>(e)];
  }
  return g;
}

DenseBatch to_dense(const std::vector<FarmScenario>& scenarios, int n_max) {
  DenseBatch b;
  b.n_max = n_max;
  b.x.reserve(scenarios.size());
  b.mask.reserve(scenarios.size());
  b.n_real.reserve(scenarios.size());
  for (const FarmScenario& sc : scenarios) {
    sc.validate();
    const int n = static_cast<int>(sc.size());
    if (n > n_max)
      throw std::invalid_argument("to_dense: scenario has " + std::to_string(n) +
                                  " turbines, exceeding the batch limit " + std::to_string(n_max));
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n_max, 5);
    x.topLeftCorner(n, 3) = wind_aligned_features(sc);
    x.col(3).head(n).setConstant(sc.conditions.wind_speed);
    x.col(4).head(n).setConstant(sc.conditions.turbulence_intensity);
    Eigen::Array<bool, Eigen::Dynamic, 1> m =
        Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n_max, false);
    m.head(n) = true;
    b.x.push_back(std::move(x));
    b.mask.push_back(std::move(m));
    b.n_real.push_back(n);
  }
  return b;
}

FeatureStats fit_stats(const std::vector<FarmScenario>& scenarios) {
  if (scenarios.empty()) throw std::invalid_argument("fit_stats: empty training set");
  FeatureStats s;
  Eigen::Array<double, 5, 1> sum = Eigen::Array<double, 5, 1>::Zero();
  Eigen::Array<double, 5, 1> sumsq = Eigen::Array<double, 5, 1>::Zero();
  Eigen::Array2d esum = Eigen::Array2d::Zero();
  Eigen::Array2d esumsq = Eigen::Array2d::Zero();
  std::int64_t n_vert = 0;
  std::int64_t n_edge = 0;
  for (const FarmScenario& sc : scenarios) {
    const FarmGraph g = build_directed_graph(sc);
    for (Eigen::Index i = 0; i < g.n_vertices(); ++i) {
      Eigen::Array<double, 5, 1> row;
      row << g.vertices(i, 0), g.vertices(i, 1), g.vertices(i, 2), g.globals(0), g.globals(1);
      sum += row;
      sumsq += row * row;
      ++n_vert;
    }
    for (Eigen::Index e = 0; e < g.n_edges(); ++e) {
      const Eigen::Array2d row = g.edge_features.row(e).transpose().array();
      esum += row;
      esumsq += row * row;
      ++n_edge;
    }
  }
  if (n_vert < 2) throw std::invalid_argument("fit_stats: need at least two vertices");
  s.mean = sum / static_cast<double>(n_vert);
  s.std = (sumsq / static_cast<double>(n_vert) - s.mean * s.mean).max(0.0).sqrt();
  for (int f = 0; f < 5; ++f)
    if (!(s.std(f) > 0.0))
      throw std::invalid_argument("fit_stats: feature " + std::to_string(f) +
                                  " has zero variance");
  if (n_edge >= 2) {
    s.edge_mean = esum / static_cast<double>(n_edge);
    s.edge_std = (esumsq / static_cast<double>(n_edge) - s.edge_mean * s.edge_mean).max(0.0).sqrt();
    for (int f = 0; f < 2; ++f)
      if (!(s.edge_std(f) > 0.0))
        throw std::invalid_argument("fit_stats: edge feature " + std::to_string(f) +
                                    " has zero variance");
  }
  s.power_scale = scenarios.front().spec.rated_power;
  return s;
}

void normalize(DenseBatch& b, const FeatureStats& stats) {
  for (std::size_t item = 0; item < b.size(); ++item) {
    const int n = b.n_real[item];
    for (int f = 0; f < 5; ++f)
      b.x[item].col(f).head(n) =
          (b.x[item].col(f).head(n).array() - stats.mean(f)) / stats.std(f);
  }
  b.stats_fingerprint = stats.fingerprint();
}

void normalize(FarmGraph& g, const FeatureStats& stats) {
  for (int f = 0; f < 3; ++f)
    g.vertices.col(f) = (g.vertices.col(f).array() - stats.mean(f)) / stats.std(f);
  for (int f = 0; f < 2; ++f)
    g.edge_features.col(f) =
        (g.edge_features.col(f).array() - stats.edge_mean(f)) / stats.edge_std(f);
  g.globals(0) = (g.globals(0) - stats.mean(3)) / stats.std(3);
  g.globals(1) = (g.globals(1) - stats.mean(4)) / stats.std(4);
}

Eigen::VectorXd normalize_power(const Eigen::VectorXd& watts, const FeatureStats& s) {
  return watts / s.power_scale;
}

Eigen::VectorXd denormalize_power(const Eigen::VectorXd& y, const FeatureStats& s) {
  return y * s.power_scale;
}

}  // namespace wakeforge
