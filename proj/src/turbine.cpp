#include "wakeforge/turbine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wakeforge {

double CurveTable::operator()(double xq) const {
  if (x.empty()) throw std::invalid_argument("CurveTable: empty table");
  if (xq <= x.front()) return y.front();
  if (xq >= x.back()) return y.back();
  const auto it = std::upper_bound(x.begin(), x.end(), xq);
  const std::size_t i = static_cast<std::size_t>(it - x.begin());
  const double t = (xq - x[i - 1]) / (x[i] - x[i - 1]);
  return y[i - 1] + t * (y[i] - y[i - 1]);
}

double TurbineSpec::power_at(double wind_speed) const {
  if (wind_speed < cut_in || wind_speed > cut_out) return 0.0;
  return power_curve(wind_speed);
}

double TurbineSpec::ct_at(double wind_speed) const { return ct_curve(wind_speed); }

void TurbineSpec::validate() const {
  if (rotor_diameter <= 0.0 || hub_height <= 0.0)
    throw std::invalid_argument("TurbineSpec: non-positive geometry");
  if (!(cut_in < cut_out))
    throw std::invalid_argument("TurbineSpec: cut_in must be below cut_out");
  for (const CurveTable* c : {&power_curve, &ct_curve}) {
    if (c->x.size() < 2 || c->x.size() != c->y.size())
      throw std::invalid_argument("TurbineSpec: malformed curve table");
    if (!std::is_sorted(c->x.begin(), c->x.end()))
      throw std::invalid_argument("TurbineSpec: curve abscissa not ascending");
  }
  for (double ct : ct_curve.y)
    if (ct < 0.0 || ct >= 1.0)
      throw std::invalid_argument("TurbineSpec: CT outside [0, 1)");
  double rated_speed = cut_out;
  for (std::size_t i = 0; i < power_curve.x.size(); ++i) {
    if (power_curve.y[i] >= rated_power) {
      rated_speed = power_curve.x[i];
      break;
    }
  }
  double prev = -1.0;
  for (std::size_t i = 0; i < power_curve.x.size(); ++i) {
    const double u = power_curve.x[i];
    const double p = power_curve.y[i];
    if (p < 0.0) throw std::invalid_argument("TurbineSpec: negative power");
    if (u < cut_in - 1e-12 && p != 0.0)
      throw std::invalid_argument("TurbineSpec: nonzero power below cut-in");
    if (u >= cut_in && u <= rated_speed) {
      if (p < prev) throw std::invalid_argument("TurbineSpec: power curve decreasing below rated");
      prev = p;
    }
  }
}

const TurbineSpec& vestas_v80() {
  static const TurbineSpec spec = [] {
    TurbineSpec s;
    s.name = "v80";
    s.rotor_diameter = 80.0;
    s.hub_height = 70.0;
    s.cut_in = 4.0;
    s.cut_out = 25.0;
    s.rated_power = 2.0e6;
    const double rated_speed = 15.0;
    const double ramp = rated_speed * rated_speed * rated_speed - s.cut_in * s.cut_in * s.cut_in;
    for (double u = 0.0; u <= 25.0 + 1e-9; u += 0.5) {
      s.power_curve.x.push_back(u);
      double p = 0.0;
      if (u >= s.cut_in && u < rated_speed)
        p = s.rated_power * (u * u * u - s.cut_in * s.cut_in * s.cut_in) / ramp;
      else if (u >= rated_speed)
        p = s.rated_power;
      s.power_curve.y.push_back(p);

      s.ct_curve.x.push_back(u);
      // plateau at 0.8 up to 10 m/s, then linear taper to 0.1 at cut-out
      double ct = 0.8;
      if (u > 10.0) ct = 0.8 - 0.7 * (u - 10.0) / 15.0;
      s.ct_curve.y.push_back(ct);
    }
    s.validate();
    return s;
  }();
  return spec;
}

}  // namespace wakeforge
