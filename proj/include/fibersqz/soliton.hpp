#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fibersqz/fiber.hpp"
#include "fibersqz/units.hpp"

// Closed-form soliton and Raman relations used to annotate and validate the
// simulations. Inputs follow the library units (ps, pJ, m, W); T_R is in fs.

namespace fibersqz {

inline constexpr double kDefaultKStar = 0.07;
inline constexpr double kRamanThresholdLow = 0.05;
inline constexpr double kRamanThresholdHigh = 0.1;

namespace detail {
inline void require_anomalous(const FiberParams& fiber) {
  if (!(fiber.beta2_ps2_per_km < 0.0)) {
    throw std::invalid_argument("bright solitons need anomalous dispersion (beta2 < 0)");
  }
  if (!(fiber.gamma_per_w_km > 0.0)) throw std::invalid_argument("soliton relations need gamma > 0");
}
inline void require_positive(double v, const char* what) {
  if (!(v > 0.0)) throw std::invalid_argument(std::string(what) + " must be positive");
}
}  // namespace detail

/// E_sol = 2 |beta2| / (gamma tau) in pJ.
inline double soliton_energy(const FiberParams& fiber, double fwhm_ps) {
  detail::require_anomalous(fiber);
  detail::require_positive(fwhm_ps, "fwhm");
  const double tau = fwhm_ps / units::kSechFwhmFactor;
  return 2.0 * std::abs(fiber.beta2()) / (fiber.gamma() * tau);
}

/// N = sqrt(tau gamma E / (2 |beta2|)).
inline double soliton_number(const FiberParams& fiber, double fwhm_ps, double energy_pj) {
  detail::require_anomalous(fiber);
  detail::require_positive(fwhm_ps, "fwhm");
  detail::require_positive(energy_pj, "energy");
  const double tau = fwhm_ps / units::kSechFwhmFactor;
  return std::sqrt(tau * fiber.gamma() * energy_pj / (2.0 * std::abs(fiber.beta2())));
}

/// T_R implied by the configured delayed response, in fs.
inline double default_TR_fs(const FiberParams& fiber) { return effective_TR_analytic(fiber.raman); }

/// Magnitude of the soliton self-frequency shift rate 8 T_R |beta2| / (15 tau^4)
/// in rad/ps per m. The shift is toward lower optical frequency.
inline double ssfs_rate(const FiberParams& fiber, double tau_ps, double tr_fs) {
  detail::require_positive(tau_ps, "tau");
  if (!(tr_fs >= 0.0)) throw std::invalid_argument("T_R must be non-negative");
  return 8.0 * units::fs_to_ps(tr_fs) * std::abs(fiber.beta2()) / (15.0 * std::pow(tau_ps, 4));
}

inline double ssfs_rate(const FiberParams& fiber, double tau_ps) {
  return ssfs_rate(fiber, tau_ps, default_TR_fs(fiber));
}

/// Raman figure of merit K = |beta2| T_R z / T^3 (T the FWHM).
inline double raman_K(const FiberParams& fiber, double fwhm_ps, double z_m, double tr_fs) {
  detail::require_positive(fwhm_ps, "fwhm");
  detail::require_positive(z_m, "z");
  detail::require_positive(tr_fs, "T_R");
  return std::abs(fiber.beta2()) * units::fs_to_ps(tr_fs) * z_m / std::pow(fwhm_ps, 3);
}

/// FWHM on the iso-K contour through (z, K*): T = (|beta2| T_R z / K*)^(1/3).
inline double optimal_duration(const FiberParams& fiber, double z_m, double k_star, double tr_fs) {
  detail::require_positive(z_m, "z");
  detail::require_positive(tr_fs, "T_R");
  if (!(k_star > 0.0 && k_star < 1.0)) throw std::invalid_argument("K* must lie in (0, 1)");
  return std::cbrt(std::abs(fiber.beta2()) * units::fs_to_ps(tr_fs) * z_m / k_star);
}

inline double optimal_duration(const FiberParams& fiber, double z_m, double k_star = kDefaultKStar) {
  return optimal_duration(fiber, z_m, k_star, default_TR_fs(fiber));
}

struct CurvePoint {
  double fwhm_ps;
  double energy_pj;
};

/// Sech energies E = 2 P0 T / 1.763 along the given durations.
inline std::vector<CurvePoint> constant_peak_power_curve(double peak_power_w, const std::vector<double>& fwhm_ps) {
  if (!(peak_power_w >= 0.0)) throw std::invalid_argument("peak power must be non-negative");
  std::vector<CurvePoint> out;
  out.reserve(fwhm_ps.size());
  for (double t : fwhm_ps) out.push_back({t, 2.0 * peak_power_w * t / units::kSechFwhmFactor});
  return out;
}

/// Fundamental-soliton line E_sol(T) along the given durations.
inline std::vector<CurvePoint> soliton_curve(const FiberParams& fiber, const std::vector<double>& fwhm_ps) {
  std::vector<CurvePoint> out;
  out.reserve(fwhm_ps.size());
  for (double t : fwhm_ps) out.push_back({t, soliton_energy(fiber, t)});
  return out;
}

}  // namespace fibersqz
