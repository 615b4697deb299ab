#include "wakeforge/wake.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "wakeforge/wind_frame.hpp"

namespace wakeforge {

void FlowConditions::validate() const {
  if (!(wind_speed > 0.0)) throw std::invalid_argument("FlowConditions: wind_speed must be > 0");
  if (turbulence_intensity < 0.0 || turbulence_intensity > 1.0)
    throw std::invalid_argument("FlowConditions: TI must lie in [0, 1]");
  if (!std::isfinite(wind_direction_deg))
    throw std::invalid_argument("FlowConditions: wind_direction must be finite");
}

void FarmScenario::validate() const {
  if (positions.rows() == 0) throw std::invalid_argument("FarmScenario: empty farm");
  if (yaw_deg.size() != positions.rows())
    throw std::invalid_argument("FarmScenario: yaw length differs from turbine count");
  conditions.validate();
  spec.validate();
  for (Eigen::Index i = 0; i < positions.rows(); ++i)
    for (Eigen::Index j = i + 1; j < positions.rows(); ++j)
      if ((positions.row(i) - positions.row(j)).norm() <= 0.0)
        throw std::invalid_argument("FarmScenario: coincident turbines");
}

void WakeParams::validate() const {
  if (!(k > 0.0) && !k_from_ti) throw std::invalid_argument("WakeParams: k must be > 0");
  if (!(kd > 0.0)) throw std::invalid_argument("WakeParams: kd must be > 0");
  if (!(rho > 0.0)) throw std::invalid_argument("WakeParams: rho must be > 0");
}

double beta_of_ct(double ct) {
  if (!(ct >= 0.0) || ct >= 1.0)
    throw std::domain_error("beta_of_ct: CT must lie in [0, 1)");
  const double s = std::sqrt(1.0 - ct);
  return 0.5 * (1.0 + s) / s;
}

double wake_sigma(double x_down, double ct, double d0, double k) {
  if (x_down < 0.0) throw std::domain_error("wake_sigma: x_down must be >= 0");
  return k * x_down + 0.2 * std::sqrt(beta_of_ct(ct)) * d0;
}

double gaussian_deficit(double x_down, double r_cross, double ct, double d0, double k,
                        bool* near_wake) {
  if (!(ct >= 0.0) || ct >= 1.0)
    throw std::domain_error("gaussian_deficit: CT must lie in [0, 1)");
  if (x_down <= 0.0) return 0.0;
  if (ct == 0.0) return 0.0;
  const double sigma = wake_sigma(x_down, ct, d0, k);
  const double rel = sigma / d0;
  const double ratio = ct / (8.0 * rel * rel);
  double amplitude;
  if (ratio >= 1.0) {
    amplitude = 1.0;
    if (near_wake) *near_wake = true;
  } else {
    // cancellation-free form of 1 - sqrt(1 - ratio)
    amplitude = ratio / (1.0 + std::sqrt(1.0 - ratio));
  }
  return amplitude * std::exp(-r_cross * r_cross / (2.0 * sigma * sigma));
}

double jimenez_deflection(double x_down, double ct, double gamma_deg, double d0, double kd) {
  if (x_down < 0.0) throw std::domain_error("jimenez_deflection: x_down must be >= 0");
  const double g = deg2rad(gamma_deg);
  const double cg = std::cos(g);
  const double alpha0 = 0.5 * cg * cg * std::sin(g) * ct;
  // integral of alpha0 / (1 + kd*s/d0)^2 from 0 to x_down
  return alpha0 * (d0 / kd) * (1.0 - 1.0 / (1.0 + kd * x_down / d0));
}

namespace {

struct AlignedFarm {
  Eigen::MatrixX2d coords;        // (streamwise, spanwise)
  std::vector<int> order;         // indices sorted by streamwise coordinate
};

AlignedFarm align_and_sort(const FarmScenario& sc) {
  AlignedFarm a;
  a.coords = to_wind_frame(sc.positions, sc.conditions.wind_direction_deg);
  a.order.resize(static_cast<std::size_t>(sc.size()));
  std::iota(a.order.begin(), a.order.end(), 0);
  std::stable_sort(a.order.begin(), a.order.end(),
                   [&](int i, int j) { return a.coords(i, 0) < a.coords(j, 0); });
  return a;
}

}  // namespace

SimulationResult simulate_farm(const FarmScenario& sc, const WakeParams& params) {
  sc.validate();
  params.validate();
  const int n = static_cast<int>(sc.size());
  const double d0 = sc.spec.rotor_diameter;
  const double u_inf = sc.conditions.wind_speed;
  const double k = params.effective_k(sc.conditions.turbulence_intensity);
  const AlignedFarm farm = align_and_sort(sc);

  SimulationResult res;
  res.effective_speeds.resize(n);
  res.powers.resize(n);
  std::vector<double> ct(static_cast<std::size_t>(n), 0.0);

  for (int jj = 0; jj < n; ++jj) {
    const int j = farm.order[static_cast<std::size_t>(jj)];
    const double xj = farm.coords(j, 0);
    const double yj = farm.coords(j, 1);
    double sumsq = 0.0;
    for (int ii = 0; ii < jj; ++ii) {
      const int i = farm.order[static_cast<std::size_t>(ii)];
      const double dx = xj - farm.coords(i, 0);
      if (!(dx > 0.0)) continue;  // abreast turbines do not wake each other
      const double defl = jimenez_deflection(dx, ct[static_cast<std::size_t>(i)],
                                             sc.yaw_deg(i), d0, params.kd);
      const double r = yj - (farm.coords(i, 1) + defl);
      bool nw = false;
      const double d = gaussian_deficit(dx, r, ct[static_cast<std::size_t>(i)], d0, k, &nw);
      res.near_wake = res.near_wake || nw;
      sumsq += d * d;
    }
    const double deficit = std::min(1.0, std::sqrt(sumsq));
    const double uw = u_inf * (1.0 - deficit);
    res.effective_speeds(j) = uw;
    ct[static_cast<std::size_t>(j)] = sc.spec.ct_at(uw);
    const double cosy = std::max(0.0, std::cos(deg2rad(sc.yaw_deg(j))));
    res.powers(j) = sc.spec.power_at(uw) * std::pow(cosy, params.yaw_power_exponent);
  }
  res.total_power = res.powers.sum();
  return res;
}

Eigen::VectorXd sample_wake_field(const FarmScenario& sc, const WakeParams& params,
                                  const Eigen::MatrixX2d& points) {
  if (points.rows() == 0) throw std::invalid_argument("sample_wake_field: empty grid");
  const SimulationResult sim = simulate_farm(sc, params);
  const double d0 = sc.spec.rotor_diameter;
  const double u_inf = sc.conditions.wind_speed;
  const double k = params.effective_k(sc.conditions.turbulence_intensity);
  const AlignedFarm farm = align_and_sort(sc);
  const Eigen::MatrixX2d probes = to_wind_frame(points, sc.conditions.wind_direction_deg);

  std::vector<double> ct(static_cast<std::size_t>(sc.size()));
  for (Eigen::Index i = 0; i < sc.size(); ++i)
    ct[static_cast<std::size_t>(i)] = sc.spec.ct_at(sim.effective_speeds(i));

  Eigen::VectorXd uw(points.rows());
  for (Eigen::Index p = 0; p < probes.rows(); ++p) {
    double sumsq = 0.0;
    for (int ii = 0; ii < static_cast<int>(sc.size()); ++ii) {
      const int i = farm.order[static_cast<std::size_t>(ii)];
      const double dx = probes(p, 0) - farm.coords(i, 0);
      if (!(dx > 0.0)) continue;
      const double defl = jimenez_deflection(dx, ct[static_cast<std::size_t>(i)],
                                             sc.yaw_deg(i), d0, params.kd);
      const double r = probes(p, 1) - (farm.coords(i, 1) + defl);
      const double d = gaussian_deficit(dx, r, ct[static_cast<std::size_t>(i)], d0, k);
      sumsq += d * d;
    }
    uw(p) = u_inf * (1.0 - std::min(1.0, std::sqrt(sumsq)));
  }
  return uw;
}

}  // namespace wakeforge
