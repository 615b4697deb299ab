#include "wakeforge/layout.hpp"

#include <cmath>
#include <stdexcept>

#include "wakeforge/rng.hpp"
#include "wakeforge/wind_frame.hpp"

namespace wakeforge {

namespace {

constexpr int kMaxAttempts = 100;

Eigen::MatrixX2d recenter(Eigen::MatrixX2d pts) {
  const Eigen::RowVector2d c = pts.colwise().mean();
  pts.rowwise() -= c;
  return pts;
}

bool spacing_ok(const Eigen::MatrixX2d& pts, Eigen::Index count, double min_dist) {
  for (Eigen::Index i = 0; i < count; ++i)
    for (Eigen::Index j = i + 1; j < count; ++j)
      if ((pts.row(i) - pts.row(j)).norm() < min_dist) return false;
  return true;
}

Eigen::Vector2d jittered(Rng& rng, double radius) {
  // uniform in a disc
  const double a = rng.uniform(0.0, 2.0 * M_PI);
  const double r = radius * std::sqrt(rng.uniform());
  return {r * std::cos(a), r * std::sin(a)};
}

Eigen::MatrixX2d gen_cluster(const LayoutParams& p, Rng& rng) {
  const int n = p.n_turbines;
  const double min_dist = p.min_spacing * p.d0;
  const double radius = p.cluster_radius_scale * min_dist * std::sqrt(static_cast<double>(n));
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Eigen::MatrixX2d pts(n, 2);
    int placed = 0;
    int darts = 0;
    const int max_darts = 200 * n;
    while (placed < n && darts < max_darts) {
      ++darts;
      const Eigen::Vector2d cand = jittered(rng, radius);
      bool ok = true;
      for (int i = 0; i < placed; ++i)
        if ((pts.row(i).transpose() - cand).norm() < min_dist) {
          ok = false;
          break;
        }
      if (ok) pts.row(placed++) = cand.transpose();
    }
    if (placed == n) return recenter(pts);
  }
  throw std::runtime_error("generate_layout: cluster packing infeasible (min_spacing=" +
                           std::to_string(p.min_spacing) + " d0 within radius_scale=" +
                           std::to_string(p.cluster_radius_scale) + ")");
}

// One string of `count` points along `heading`, pitched `pitch` apart with
// per-point jitter, starting at `origin`.
void fill_string(Eigen::MatrixX2d& pts, Eigen::Index at, int count, const Eigen::Vector2d& origin,
                 double heading_rad, double pitch, double jitter_radius, Rng& rng) {
  const Eigen::Vector2d dir(std::cos(heading_rad), std::sin(heading_rad));
  for (int i = 0; i < count; ++i)
    pts.row(at + i) = (origin + dir * (pitch * i) + jittered(rng, jitter_radius)).transpose();
}

Eigen::MatrixX2d gen_single_string(const LayoutParams& p, Rng& rng) {
  const int n = p.n_turbines;
  const double min_dist = p.min_spacing * p.d0;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const double heading =
        p.heading_deg ? deg2rad(*p.heading_deg) : rng.uniform(0.0, 2.0 * M_PI);
    const double pitch = rng.uniform(5.0, 7.0) * p.d0 * p.pitch_scale;
    Eigen::MatrixX2d pts(n, 2);
    // jitter kept at a quarter diameter so the string stays inside the
    // half-diameter collinearity band around its best-fit line
    fill_string(pts, 0, n, Eigen::Vector2d::Zero(), heading, pitch, 0.25 * p.d0, rng);
    if (spacing_ok(pts, n, min_dist)) return recenter(pts);
  }
  throw std::runtime_error("generate_layout: single_string spacing infeasible (min_spacing=" +
                           std::to_string(p.min_spacing) + " d0 vs pitch_scale=" +
                           std::to_string(p.pitch_scale) + ")");
}

Eigen::MatrixX2d gen_multiple_string(const LayoutParams& p, Rng& rng) {
  const int n = p.n_turbines;
  const double min_dist = p.min_spacing * p.d0;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const int n_strings = std::min(n, 2 + rng.uniform_int(4));  // 2..5
    Eigen::MatrixX2d pts(n, 2);
    Eigen::Index at = 0;
    const double origin_spread = (2.0 + n_strings) * p.d0;
    for (int s = 0; s < n_strings; ++s) {
      const int count = n / n_strings + (s < n % n_strings ? 1 : 0);
      const double heading = rng.uniform(0.0, 2.0 * M_PI);
      const double pitch = rng.uniform(5.0, 7.0) * p.d0 * p.pitch_scale;
      fill_string(pts, at, count, jittered(rng, origin_spread), heading, pitch, 0.5 * p.d0, rng);
      at += count;
    }
    if (spacing_ok(pts, n, min_dist)) return recenter(pts);
  }
  throw std::runtime_error(
      "generate_layout: multiple_string spacing infeasible after bounded retries (min_spacing=" +
      std::to_string(p.min_spacing) + " d0)");
}

Eigen::MatrixX2d gen_parallel_string(const LayoutParams& p, Rng& rng) {
  const int n = p.n_turbines;
  const double min_dist = p.min_spacing * p.d0;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const int n_strings = std::min(n, 2 + rng.uniform_int(5));  // 2..6
    const double heading =
        p.heading_deg ? deg2rad(*p.heading_deg) : rng.uniform(0.0, 2.0 * M_PI);
    const Eigen::Vector2d dir(std::cos(heading), std::sin(heading));
    const Eigen::Vector2d normal(-dir.y(), dir.x());
    const double row_pitch = rng.uniform(4.0, 6.0) * p.d0;
    const double pitch = rng.uniform(5.0, 7.0) * p.d0 * p.pitch_scale;
    Eigen::MatrixX2d pts(n, 2);
    Eigen::Index at = 0;
    for (int s = 0; s < n_strings; ++s) {
      const int count = n / n_strings + (s < n % n_strings ? 1 : 0);
      const Eigen::Vector2d origin =
          normal * (row_pitch * s) + dir * rng.uniform(0.0, 2.0) * p.d0;
      fill_string(pts, at, count, origin, heading, pitch, 0.35 * p.d0, rng);
      at += count;
    }
    if (spacing_ok(pts, n, min_dist)) return recenter(pts);
  }
  throw std::runtime_error(
      "generate_layout: parallel_string spacing infeasible after bounded retries (min_spacing=" +
      std::to_string(p.min_spacing) + " d0)");
}

Eigen::MatrixX2d gen_regular_grid(const LayoutParams& p) {
  const int n = p.n_turbines;
  // aspect chosen so n=80 gives the 8x10 reference grid
  int rows = std::max(1, static_cast<int>(std::lround(std::sqrt(n / 1.25))));
  const int cols = (n + rows - 1) / rows;
  const double pitch = 7.0 * p.d0;
  Eigen::MatrixX2d pts(n, 2);
  for (int i = 0; i < n; ++i) {
    const int r = i / cols;
    const int c = i % cols;
    pts(i, 0) = c * pitch;
    pts(i, 1) = r * pitch;
  }
  return recenter(pts);
}

}  // namespace

void LayoutParams::validate() const {
  if (n_turbines < 2 || n_turbines > 100)
    throw std::invalid_argument("LayoutParams: n_turbines must lie in [2, 100]");
  if (min_spacing < 2.0) throw std::invalid_argument("LayoutParams: min_spacing must be >= 2");
  if (!(d0 > 0.0)) throw std::invalid_argument("LayoutParams: d0 must be > 0");
}

Eigen::MatrixX2d generate_layout(LayoutStyle style, const LayoutParams& params) {
  params.validate();
  Rng rng(params.seed);
  Eigen::MatrixX2d pts;
  switch (style) {
    case LayoutStyle::cluster: pts = gen_cluster(params, rng); break;
    case LayoutStyle::single_string: pts = gen_single_string(params, rng); break;
    case LayoutStyle::multiple_string: pts = gen_multiple_string(params, rng); break;
    case LayoutStyle::parallel_string: pts = gen_parallel_string(params, rng); break;
    case LayoutStyle::regular_grid: pts = gen_regular_grid(params); break;
  }
  if (!validate_layout(pts, params.d0, params.min_spacing).empty())
    throw std::runtime_error("generate_layout: internal spacing violation");
  return pts;
}

std::vector<SpacingViolation> validate_layout(const Eigen::MatrixX2d& positions, double d0,
                                              double min_spacing) {
  std::vector<SpacingViolation> out;
  const double min_dist = min_spacing * d0;
  for (Eigen::Index i = 0; i < positions.rows(); ++i)
    for (Eigen::Index j = i + 1; j < positions.rows(); ++j) {
      const double dist = (positions.row(i) - positions.row(j)).norm();
      if (dist < min_dist)
        out.push_back({static_cast<int>(i), static_cast<int>(j), dist});
    }
  return out;
}

std::string to_string(LayoutStyle style) {
  switch (style) {
    case LayoutStyle::cluster: return "cluster";
    case LayoutStyle::single_string: return "single_string";
    case LayoutStyle::multiple_string: return "multiple_string";
    case LayoutStyle::parallel_string: return "parallel_string";
    case LayoutStyle::regular_grid: return "regular_grid";
  }
  return "unknown";
}

LayoutStyle layout_style_from_string(const std::string& name) {
  if (name == "cluster") return LayoutStyle::cluster;
  if (name == "single_string") return LayoutStyle::single_string;
  if (name == "multiple_string") return LayoutStyle::multiple_string;
  if (name == "parallel_string") return LayoutStyle::parallel_string;
  if (name == "regular_grid") return LayoutStyle::regular_grid;
  throw std::invalid_argument("unknown layout style: " + name);
}

}  // namespace wakeforge
