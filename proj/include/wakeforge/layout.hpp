#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace wakeforge {

enum class LayoutStyle { cluster, single_string, multiple_string, parallel_string, regular_grid };

std::string to_string(LayoutStyle style);
LayoutStyle layout_style_from_string(const std::string& name);

struct LayoutParams {
  int n_turbines = 10;
  double min_spacing = 3.0;  // multiples of d0
  double d0 = 80.0;          // m
  std::optional<double> heading_deg;  // string styles; random when unset
  double pitch_scale = 1.0;           // scales along-string pitch
  double cluster_radius_scale = 1.2;  // disc radius = scale * min_spacing * d0 * sqrt(n)
  std::uint64_t seed = 0;

  void validate() const;
};

/// Positions (east, north) in metres, centred on the layout centroid.
/// Deterministic for a fixed (style, params). Throws std::runtime_error when
/// the spacing constraint cannot be met after bounded retries.
Eigen::MatrixX2d generate_layout(LayoutStyle style, const LayoutParams& params);

struct SpacingViolation {
  int i = 0;
  int j = 0;
  double distance = 0.0;
};

/// Every pair closer than min_spacing * d0. Empty result means the layout is valid.
std::vector<SpacingViolation> validate_layout(const Eigen::MatrixX2d& positions, double d0,
                                              double min_spacing);

}  // namespace wakeforge
