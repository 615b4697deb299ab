#pragma once

#include <string>
#include <vector>

namespace wakeforge {

/// Piecewise-linear lookup table on an ascending abscissa.
/// Evaluation clamps to the first/last tabulated value outside the range.
struct CurveTable {
  std::vector<double> x;
  std::vector<double> y;

  double operator()(double xq) const;
};

// Rotor geometry plus tabulated power and thrust-coefficient curves.
struct TurbineSpec {
  std::string name;
  double rotor_diameter = 80.0;  // m
  double hub_height = 70.0;      // m
  double cut_in = 4.0;           // m/s
  double cut_out = 25.0;         // m/s
  double rated_power = 2.0e6;    // W
  CurveTable power_curve;        // m/s -> W, valid on [cut_in, cut_out]
  CurveTable ct_curve;           // m/s -> thrust coefficient

  /// Electrical power at hub wind speed; zero below cut-in and above cut-out.
  double power_at(double wind_speed) const;

  /// Thrust coefficient at hub wind speed (clamped table lookup).
  double ct_at(double wind_speed) const;

  /// Throws std::invalid_argument if the tables violate the contract
  /// (unsorted abscissae, CT outside [0,1), power nonzero past the cuts,
  /// power decreasing below rated speed).
  void validate() const;
};

/// Built-in 2 MW reference turbine: 80 m rotor, 70 m hub, cut-in 4 m/s,
/// cut-out 25 m/s, rated at 15 m/s, tabulated every 0.5 m/s.
const TurbineSpec& vestas_v80();

}  // namespace wakeforge
