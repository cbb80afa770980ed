#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fibersqz/fft.hpp"
#include "fibersqz/units.hpp"

namespace fibersqz {

inline constexpr int kMinGridPoints = 256;
inline constexpr double kDefaultWavelengthUm = 1.56;

/// Uniform periodic time lattice t_j = (j - n/2) dt and the matching
/// angular-frequency offsets in standard DFT order (0, +, ..., Nyquist, -).
class TemporalGrid {
 public:
  TemporalGrid(int n_points, double window_ps) : n_(n_points), window_(window_ps) {
    if (n_points < kMinGridPoints || (n_points & (n_points - 1)) != 0) {
      throw std::invalid_argument("grid size must be a power of two >= " +
                                  std::to_string(kMinGridPoints) + ", got " +
                                  std::to_string(n_points));
    }
    if (!(window_ps > 0.0) || !std::isfinite(window_ps)) {
      throw std::invalid_argument("grid window must be positive");
    }
    dt_ = window_ / n_;
    time_.resize(n_);
    omega_.resize(n_);
    const double domega = 2.0 * units::kPi / window_;
    for (int j = 0; j < n_; ++j) {
      time_[j] = (j - n_ / 2) * dt_;
      omega_[j] = (j < n_ / 2 ? j : j - n_) * domega;
    }
  }

  int n_points() const { return n_; }
  double window() const { return window_; }
  double dt() const { return dt_; }
  double domega() const { return 2.0 * units::kPi / window_; }
  std::span<const double> time() const { return time_; }
  std::span<const double> omega() const { return omega_; }

 private:
  int n_;
  double window_;
  double dt_;
  std::vector<double> time_;
  std::vector<double> omega_;
};

using GridPtr = std::shared_ptr<const TemporalGrid>;

inline GridPtr make_grid(int n_points, double window_ps) {
  return std::make_shared<const TemporalGrid>(n_points, window_ps);
}

/// Sampled slowly varying envelope in sqrt(W) on a shared grid.
class ComplexEnvelope {
 public:
  ComplexEnvelope(GridPtr grid, std::vector<Complex> samples,
                  double carrier_wavelength_um = kDefaultWavelengthUm)
      : grid_(std::move(grid)), samples_(std::move(samples)),
        wavelength_um_(carrier_wavelength_um) {
    if (!grid_) throw std::invalid_argument("envelope requires a grid");
    if (static_cast<int>(samples_.size()) != grid_->n_points()) {
      throw std::invalid_argument("envelope length does not match grid");
    }
    if (!(wavelength_um_ > 0.0)) throw std::invalid_argument("carrier wavelength must be positive");
  }

  const TemporalGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::span<const Complex> samples() const { return samples_; }
  double carrier_wavelength_um() const { return wavelength_um_; }
  double photon_energy_pj() const { return units::photon_energy_pj(wavelength_um_); }

  /// sum |A|^2 dt in pJ.
  double energy() const {
    double acc = 0.0;
    for (const auto& a : samples_) acc += std::norm(a);
    return acc * grid_->dt();
  }

  ComplexEnvelope with_samples(std::vector<Complex> samples) const {
    return ComplexEnvelope(grid_, std::move(samples), wavelength_um_);
  }

 private:
  GridPtr grid_;
  std::vector<Complex> samples_;
  double wavelength_um_;
};

enum class PulseShape { kSech };

struct PulseSpec {
  double energy_pj = 61.7;
  double fwhm_ps = 0.2;
  PulseShape shape = PulseShape::kSech;
  double chirp = 0.0;

  /// sech width parameter tau, with T = 1.763 tau.
  double tau_ps() const { return fwhm_ps / units::kSechFwhmFactor; }
  /// P0 = E / (2 tau).
  double peak_power_w() const { return energy_pj / (2.0 * tau_ps()); }
};

/// Window max(16 T, 10 ps) with the smallest power-of-two size >= 512 that
/// puts at least eight samples inside the FWHM.
inline GridPtr default_grid_for(const PulseSpec& spec) {
  const double window = std::max(16.0 * spec.fwhm_ps, 10.0);
  int n = 512;
  while (spec.fwhm_ps < 8.0 * window / n) n *= 2;
  return make_grid(n, window);
}

inline ComplexEnvelope sech_pulse(const GridPtr& grid, const PulseSpec& spec,
                                  double carrier_wavelength_um = kDefaultWavelengthUm) {
  if (!(spec.energy_pj > 0.0)) throw std::invalid_argument("pulse energy must be positive");
  if (!(spec.fwhm_ps > 0.0)) throw std::invalid_argument("pulse FWHM must be positive");
  if (spec.fwhm_ps < 8.0 * grid->dt()) {
    throw std::invalid_argument("pulse is under-resolved: FWHM < 8 dt");
  }
  if (grid->window() < 16.0 * spec.fwhm_ps) {
    throw std::invalid_argument("time window smaller than 16 FWHM");
  }
  const double tau = spec.tau_ps();
  const double amplitude = std::sqrt(spec.peak_power_w());
  std::vector<Complex> samples(grid->n_points());
  const auto t = grid->time();
  for (int j = 0; j < grid->n_points(); ++j) {
    const double x = t[j] / tau;
    const double phase = -0.5 * spec.chirp * x * x;
    samples[j] = std::polar(amplitude / std::cosh(x), phase);
  }
  return ComplexEnvelope(grid, std::move(samples), carrier_wavelength_um);
}

/// Spectral amplitudes dt * sum_j A_j exp(+i w_k j dt) in DFT order.
/// Parseval: sum |A|^2 dt == sum |S|^2 dw / (2 pi).
inline std::vector<Complex> to_spectrum(const ComplexEnvelope& env) {
  std::vector<Complex> s(env.samples().begin(), env.samples().end());
  fft_plan(env.grid().n_points())->to_spectrum(s);
  const double dt = env.grid().dt();
  for (auto& v : s) v *= dt;
  return s;
}

inline ComplexEnvelope from_spectrum(const ComplexEnvelope& like, std::vector<Complex> spectrum) {
  fft_plan(like.grid().n_points())->to_time(spectrum);
  const double scale = 1.0 / (like.grid().dt() * like.grid().n_points());
  for (auto& v : spectrum) v *= scale;
  return like.with_samples(std::move(spectrum));
}

namespace detail {

// Full width at half maximum of a periodic sampled profile around its global
// maximum, with linear interpolation of both crossings. Returns the width in
// sample units.
inline double periodic_fwhm_samples(std::span<const double> y) {
  const int n = static_cast<int>(y.size());
  const int peak = static_cast<int>(std::max_element(y.begin(), y.end()) - y.begin());
  const double half = 0.5 * y[peak];
  auto at = [&](int k) { return y[((k % n) + n) % n]; };

  int r = peak;
  while (r - peak < n && at(r + 1) >= half) ++r;
  const double right = r + (at(r) - half) / (at(r) - at(r + 1));

  int l = peak;
  while (peak - l < n && at(l - 1) >= half) --l;
  const double left = l - (at(l) - half) / (at(l) - at(l - 1));
  return right - left;
}

}  // namespace detail

struct PulseMetrics {
  double energy_pj = 0.0;
  double peak_power_w = 0.0;
  double fwhm_ps = 0.0;
  double spectral_centroid = 0.0;  // rad/ps, positive toward higher optical frequency
  double spectral_fwhm = 0.0;      // rad/ps
};

inline PulseMetrics pulse_metrics(const ComplexEnvelope& env) {
  const auto& grid = env.grid();
  const int n = grid.n_points();
  std::vector<double> intensity(n);
  for (int j = 0; j < n; ++j) intensity[j] = std::norm(env.samples()[j]);
  const double peak = *std::max_element(intensity.begin(), intensity.end());
  if (!(peak > 0.0)) throw std::invalid_argument("pulse_metrics: envelope is identically zero");

  PulseMetrics m;
  m.energy_pj = std::accumulate(intensity.begin(), intensity.end(), 0.0) * grid.dt();
  m.peak_power_w = peak;
  m.fwhm_ps = detail::periodic_fwhm_samples(intensity) * grid.dt();

  const auto spectrum = to_spectrum(env);
  const auto omega = grid.omega();
  // Reorder to monotonically increasing frequency for the width search.
  std::vector<double> psd(n);
  double total = 0.0, first = 0.0;
  for (int k = 0; k < n; ++k) {
    const double p = std::norm(spectrum[k]);
    psd[(k + n / 2) % n] = p;
    total += p;
    first += omega[k] * p;
  }
  m.spectral_centroid = first / total;
  m.spectral_fwhm = detail::periodic_fwhm_samples(psd) * grid.domega();
  return m;
}

}  // namespace fibersqz
