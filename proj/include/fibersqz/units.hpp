#pragma once

// Unit system used throughout the library:
//   time ps, angular frequency rad/ps, length m, power W, energy pJ (= W*ps).
// Fiber constants are quoted per km in configuration files and converted here.

namespace fibersqz::units {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kPlanck = 6.62607015e-34;      // J s
inline constexpr double kSpeedOfLight = 2.99792458e8;  // m/s
inline constexpr double kJoulePerPicojoule = 1e-12;

// FWHM/width ratio of a sech^2 intensity profile, rounded as quoted in the
// soliton literature (exact value 2 acosh(sqrt 2) = 1.76275).
inline constexpr double kSechFwhmFactor = 1.763;

/// Photon energy h*c/lambda in pJ for a carrier wavelength in micrometres.
constexpr double photon_energy_pj(double wavelength_um) {
  return kPlanck * kSpeedOfLight / (wavelength_um * 1e-6) / kJoulePerPicojoule;
}

constexpr double per_km_to_per_m(double value) { return value * 1e-3; }
constexpr double fs_to_ps(double value) { return value * 1e-3; }
constexpr double ps_to_fs(double value) { return value * 1e3; }

}  // namespace fibersqz::units
