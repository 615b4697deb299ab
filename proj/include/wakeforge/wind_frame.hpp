#pragma once

#include <Eigen/Dense>

namespace wakeforge {

inline double deg2rad(double d) { return d * M_PI / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / M_PI; }

// Wind directions are meteorological: degrees the wind blows FROM, clockwise
// from north. Positions are planar (east, north) metres. The wind-aligned
// frame has +x pointing downstream (the direction the air moves) and +y
// spanwise, chosen so that (downstream, spanwise) is right-handed.

/// Unit vector (east, north) of the direction the air moves toward.
Eigen::Vector2d flow_direction(double wind_direction_deg);

/// Unit vector (east, north) of the +spanwise axis.
Eigen::Vector2d spanwise_direction(double wind_direction_deg);

/// Rotate (east, north) rows into (streamwise, spanwise) rows.
Eigen::MatrixX2d to_wind_frame(const Eigen::MatrixX2d& positions, double wind_direction_deg);

/// Inverse of to_wind_frame.
Eigen::MatrixX2d from_wind_frame(const Eigen::MatrixX2d& aligned, double wind_direction_deg);

}  // namespace wakeforge
