#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "wakeforge/wake.hpp"

namespace wakeforge {

// Sparse directed wake-interaction graph. Vertex features are wind-aligned
// (spanwise, streamwise, yaw); edge features are (relative spanwise,
// relative streamwise) of dst with respect to src; globals are (U_inf, TI).
struct FarmGraph {
  Eigen::MatrixXd vertices;                 // N x 3
  std::vector<std::pair<int, int>> edges;   // (src, dst), src strictly upstream
  Eigen::MatrixXd edge_features;            // N_e x 2
  Eigen::Vector2d globals;                  // (U_inf, TI)

  Eigen::Index n_vertices() const { return vertices.rows(); }
  Eigen::Index n_edges() const { return static_cast<Eigen::Index>(edges.size()); }
};

// Padded per-item feature matrices for set-transformer input. Row layout is
// (spanwise, streamwise, yaw, U_inf, TI); masked rows are zero and real rows
// come first.
struct DenseBatch {
  int n_max = 100;
  std::vector<Eigen::MatrixXd> x;                          // B items, n_max x 5
  std::vector<Eigen::Array<bool, Eigen::Dynamic, 1>> mask; // B items, n_max
  std::vector<int> n_real;
  std::uint64_t stats_fingerprint = 0;  // nonzero once normalized

  std::size_t size() const { return x.size(); }
};

struct FeatureStats {
  Eigen::Array<double, 5, 1> mean = Eigen::Array<double, 5, 1>::Zero();
  Eigen::Array<double, 5, 1> std = Eigen::Array<double, 5, 1>::Ones();
  Eigen::Array2d edge_mean = Eigen::Array2d::Zero();
  Eigen::Array2d edge_std = Eigen::Array2d::Ones();
  double power_scale = 2.0e6;  // W per normalized unit

  std::uint64_t fingerprint() const;
};

/// Wind-aligned per-turbine features (spanwise, streamwise, yaw), with the
/// rotation centred on the farm centroid.
Eigen::MatrixXd wind_aligned_features(const FarmScenario& scenario);

/// Directed edge i->j iff j is strictly downstream of i and the bearing from
/// i to j deviates from the downwind direction by at most cone_half_angle.
FarmGraph build_directed_graph(const FarmScenario& scenario, double cone_half_angle_deg = 15.0);

/// Pad scenarios into fixed-size feature matrices with validity masks.
DenseBatch to_dense(const std::vector<FarmScenario>& scenarios, int n_max = 100);

/// Per-feature z-score statistics over the real vertices (and edges) of a
/// training set. Throws on zero-variance features.
FeatureStats fit_stats(const std::vector<FarmScenario>& scenarios);

void normalize(DenseBatch& batch, const FeatureStats& stats);
void normalize(FarmGraph& graph, const FeatureStats& stats);

inline double normalize_power(double watts, const FeatureStats& s) { return watts / s.power_scale; }
inline double denormalize_power(double y, const FeatureStats& s) { return y * s.power_scale; }
Eigen::VectorXd normalize_power(const Eigen::VectorXd& watts, const FeatureStats& s);
Eigen::VectorXd denormalize_power(const Eigen::VectorXd& y, const FeatureStats& s);

}  // namespace wakeforge
