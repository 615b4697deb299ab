#pragma once

#include <Eigen/Dense>

#include "wakeforge/turbine.hpp"

namespace wakeforge {

// Free-stream inflow shared by the whole farm.
struct FlowConditions {
  double wind_speed = 10.0;          // m/s
  double wind_direction_deg = 270.0; // met convention: FROM, clockwise from north
  double turbulence_intensity = 0.08;

  void validate() const;
};

// A farm to simulate: planar layout, per-turbine yaw (degrees, positive
// counter-clockwise from the incoming wind), inflow and turbine model.
struct FarmScenario {
  Eigen::MatrixX2d positions;  // (east, north) metres
  Eigen::VectorXd yaw_deg;
  FlowConditions conditions;
  TurbineSpec spec;

  Eigen::Index size() const { return positions.rows(); }
  void validate() const;
};

struct WakeParams {
  double k = 0.0324555;   // wake growth rate
  double kd = 0.1;        // deflection decay constant
  double rho = 1.225;     // kg/m^3 (absorbed by the tabulated power curve)
  double yaw_power_exponent = 3.0;
  bool k_from_ti = false; // when set, k = k_ti_slope * TI
  double k_ti_slope = 0.4;

  enum class Superposition { sum_of_squares };
  Superposition superposition = Superposition::sum_of_squares;

  double effective_k(double ti) const { return k_from_ti ? k_ti_slope * ti : k; }
  void validate() const;
};

struct SimulationResult {
  Eigen::VectorXd effective_speeds;  // m/s
  Eigen::VectorXd powers;            // W
  double total_power = 0.0;          // W
  bool near_wake = false;            // set when a deficit amplitude was clamped
};

/// Wake-width shape parameter; requires 0 <= ct < 1.
double beta_of_ct(double ct);

/// Gaussian wake width sigma(x) = k*x + 0.2*sqrt(beta)*d0, x >= 0.
double wake_sigma(double x_down, double ct, double d0, double k);

/// Fractional velocity deficit of a single wake at downstream distance x_down
/// and distance r_cross from the (deflected) wake centerline. Returns 0 for
/// x_down <= 0. In the near-wake regime (ct >= 8*(sigma/d0)^2) the amplitude
/// is clamped to 1 and *near_wake is set when provided.
double gaussian_deficit(double x_down, double r_cross, double ct, double d0, double k,
                        bool* near_wake = nullptr);

/// Lateral offset (m) of a yawed turbine's wake centerline at x_down >= 0,
/// closed form of the skew-angle integral with tan(a) ~ a. Sign matches gamma.
double jimenez_deflection(double x_down, double ct, double gamma_deg, double d0, double kd);

/// Effective wind speeds and powers for every turbine. Turbines are processed
/// in downstream order; deficits from distinct upstream wakes combine as the
/// square root of the sum of squares, each wake shed with the CT of its
/// generator's own effective speed.
SimulationResult simulate_farm(const FarmScenario& scenario, const WakeParams& params = {});

/// Effective wind speed at arbitrary probe points (east, north), using the
/// same kernels and turbine states as simulate_farm.
Eigen::VectorXd sample_wake_field(const FarmScenario& scenario, const WakeParams& params,
                                  const Eigen::MatrixX2d& points);

}  // namespace wakeforge
