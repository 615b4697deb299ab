#include "wakeforge/wind_frame.hpp"

#include <cmath>

namespace wakeforge {

Eigen::Vector2d flow_direction(double wind_direction_deg) {
  const double t = deg2rad(wind_direction_deg);
  return {-std::sin(t), -std::cos(t)};
}

Eigen::Vector2d spanwise_direction(double wind_direction_deg) {
  const double t = deg2rad(wind_direction_deg);
  return {std::cos(t), -std::sin(t)};
}

Eigen::MatrixX2d to_wind_frame(const Eigen::MatrixX2d& positions, double wind_direction_deg) {
  const Eigen::Vector2d d = flow_direction(wind_direction_deg);
  const Eigen::Vector2d s = spanwise_direction(wind_direction_deg);
  Eigen::MatrixX2d aligned(positions.rows(), 2);
  aligned.col(0) = positions * d;
  aligned.col(1) = positions * s;
  return aligned;
}

Eigen::MatrixX2d from_wind_frame(const Eigen::MatrixX2d& aligned, double wind_direction_deg) {
  const Eigen::Vector2d d = flow_direction(wind_direction_deg);
  const Eigen::Vector2d s = spanwise_direction(wind_direction_deg);
  Eigen::MatrixX2d positions(aligned.rows(), 2);
  positions = aligned.col(0) * d.transpose() + aligned.col(1) * s.transpose();
  return positions;
}

}  // namespace wakeforge
