#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fibersqz/fft.hpp"
#include "fibersqz/fiber.hpp"
#include "fibersqz/grid.hpp"
#include "fibersqz/rng.hpp"

namespace fibersqz {

class PropagationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PropagationConfig {
  double total_length_m = 30.0;
  double dz_m = 0.005;
  std::vector<double> snapshot_distances{30.0};
  bool quantum_noise = true;
  bool raman_noise = false;
  /// Apply intrinsic loss inside the linear step instead of lumped at detection.
  bool distributed_loss = false;
  double temperature_k = 300.0;  // phonon bath for the Raman noise term
  std::uint64_t seed = 1;

  void validate() const {
    if (!(total_length_m > 0.0)) throw std::invalid_argument("propagation.length must be positive");
    if (!(dz_m > 0.0)) throw std::invalid_argument("propagation.dz must be positive");
    if (snapshot_distances.empty()) throw std::invalid_argument("propagation.snapshots must not be empty");
    double previous = 0.0;
    for (std::size_t k = 0; k < snapshot_distances.size(); ++k) {
      const double z = snapshot_distances[k];
      if (!(z >= 0.0) || z > total_length_m * (1.0 + 1e-12)) {
        throw std::invalid_argument("propagation.snapshots must lie in [0, length]");
      }
      if (k > 0 && !(z > previous)) throw std::invalid_argument("propagation.snapshots must be strictly increasing");
      if (z > previous && dz_m > (z - previous) * (1.0 + 1e-9)) {
        throw std::invalid_argument("propagation.dz exceeds the snapshot spacing");
      }
      previous = z;
    }
    if (!(temperature_k > 0.0)) throw std::invalid_argument("propagation.temperature must be positive");
  }
};

/// Adds symmetric-ordering vacuum noise: every time sample receives an
/// independent complex Gaussian with <|dA|^2> = hbar w0 / (2 dt), i.e. half a
/// photon per temporal mode.
inline void add_vacuum_noise(std::span<Complex> samples, double dt_ps, double photon_energy_pj, CounterRng& rng) {
  const double sigma = std::sqrt(photon_energy_pj / (4.0 * dt_ps));  // per quadrature
  for (auto& a : samples) {
    const auto [x, y] = rng.normal_pair();
    a += Complex(sigma * x, sigma * y);
  }
}

inline ComplexEnvelope inject_vacuum_noise(const ComplexEnvelope& env, CounterRng& rng) {
  std::vector<Complex> s(env.samples().begin(), env.samples().end());
  add_vacuum_noise(s, env.grid().dt(), env.photon_energy_pj(), rng);
  return env.with_samples(std::move(s));
}

/// Symmetric split-step integrator for
///   dA/dz = i D(w) A + i gamma A [(1 - f_R)|A|^2 + f_R h_R * |A|^2] (+ i A Gamma_R)
/// Immutable after construction; run() may be called concurrently.
class SplitStepPropagator {
 public:
  SplitStepPropagator(GridPtr grid, FiberParams fiber, PropagationConfig cfg, double photon_energy_pj)
      : grid_(std::move(grid)), fiber_(std::move(fiber)), cfg_(std::move(cfg)),
        plan_(fft_plan(grid_->n_points())), photon_energy_(photon_energy_pj) {
    fiber_.validate();
    cfg_.validate();
    const int n = grid_->n_points();
    raman_fraction_ = fiber_.raman.active_fraction();
    if (raman_fraction_ > 0.0) {
      raman_transfer_.resize(n);
      for (int k = 0; k < n; ++k) raman_transfer_[k] = raman_transfer(fiber_.raman, grid_->omega()[k]) / double(n);
    }
    if (cfg_.raman_noise && raman_fraction_ > 0.0) build_raman_noise_spectrum();

    double z = 0.0;
    for (double target : cfg_.snapshot_distances) {
      Segment seg;
      seg.length = target - z;
      seg.steps = seg.length > 0.0 ? static_cast<int>(std::ceil(seg.length / cfg_.dz_m - 1e-9)) : 0;
      if (seg.steps > 0) {
        const double h = seg.length / seg.steps;
        seg.half = &operator_for(0.5 * h);
        seg.full = &operator_for(h);
        seg.h = h;
      }
      segments_.push_back(seg);
      z = target;
    }
  }

  SplitStepPropagator(const SplitStepPropagator&) = delete;
  SplitStepPropagator& operator=(const SplitStepPropagator&) = delete;

  const TemporalGrid& grid() const { return *grid_; }
  const PropagationConfig& config() const { return cfg_; }

  /// Evolves `input` and returns a copy at every snapshot distance. `rng`
  /// feeds the Raman noise term (when enabled) and continues the stream used
  /// for the initial vacuum noise.
  std::vector<std::vector<Complex>> run(std::span<const Complex> input, CounterRng& rng) const {
    std::vector<std::vector<Complex>> out;
    out.reserve(segments_.size());
    FieldBuffer field(input.begin(), input.end());
    FieldBuffer scratch(field.size());
    std::vector<double> noise;
    double z = 0.0;
    for (const auto& seg : segments_) {
      if (seg.steps > 0) {
        linear(field, *seg.half);
        for (int s = 0; s < seg.steps; ++s) {
          nonlinear(field, seg.h, scratch, noise, rng);
          linear(field, s + 1 < seg.steps ? *seg.full : *seg.half);
        }
      }
      z += seg.length;
      for (const auto& a : field) {
        if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) {
          std::ostringstream msg;
          msg << "non-finite field at z = " << z << " m (dz = " << cfg_.dz_m << " m); step too large";
          throw PropagationError(msg.str());
        }
      }
      out.emplace_back(field.begin(), field.end());
    }
    return out;
  }

 private:
  struct Segment {
    double length = 0.0;
    double h = 0.0;
    int steps = 0;
    const FieldBuffer* half = nullptr;
    const FieldBuffer* full = nullptr;
  };

  // Dispersion factors with the 1/n of the inverse transform folded in.
  const FieldBuffer& operator_for(double h) {
    auto& slot = operators_[h];
    if (slot.empty()) {
      const DispersionOperator op(*grid_, fiber_, h, cfg_.distributed_loss);
      const double scale = 1.0 / grid_->n_points();
      for (const auto& f : op.factors()) slot.push_back(f * scale);
    }
    return slot;
  }

  static void multiply(FieldBuffer& a, const FieldBuffer& b) {
    const std::size_t n = a.size();
    double* x = reinterpret_cast<double*>(a.data());
    const double* y = reinterpret_cast<const double*>(b.data());
    for (std::size_t k = 0; k < 2 * n; k += 2) {
      const double re = x[k] * y[k] - x[k + 1] * y[k + 1];
      const double im = x[k] * y[k + 1] + x[k + 1] * y[k];
      x[k] = re;
      x[k + 1] = im;
    }
  }

  void linear(FieldBuffer& field, const FieldBuffer& factors) const {
    plan_->to_spectrum(field);
    multiply(field, factors);
    plan_->to_time(field);
  }

  static void rotate(Complex& a, double phase) {
    const double c = std::cos(phase), s = std::sin(phase);
    const double re = a.real() * c - a.imag() * s;
    const double im = a.real() * s + a.imag() * c;
    a = Complex(re, im);
  }

  void nonlinear(FieldBuffer& field, double h, FieldBuffer& scratch, std::vector<double>& noise,
                 CounterRng& rng) const {
    const std::size_t n = field.size();
    const double gamma = fiber_.gamma();
    if (gamma == 0.0) return;
    const double instantaneous = gamma * h * (1.0 - raman_fraction_);
    if (raman_fraction_ > 0.0) {
      for (std::size_t j = 0; j < n; ++j) scratch[j] = std::norm(field[j]);
      plan_->to_spectrum(scratch);
      multiply(scratch, raman_transfer_);
      plan_->to_time(scratch);
      const double delayed = gamma * h * raman_fraction_;
      if (!noise_amplitude_.empty()) draw_raman_noise(h, noise, rng);
      for (std::size_t j = 0; j < n; ++j) {
        double phase = instantaneous * std::norm(field[j]) + delayed * scratch[j].real();
        if (!noise.empty()) phase += noise[j];
        rotate(field[j], phase);
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) rotate(field[j], instantaneous * std::norm(field[j]));
    }
  }

  // Spontaneous/thermal Raman phase noise. In the Wigner picture each
  // frequency offset W receives g(W) P (n_th(W) + 1/2) photons per unit
  // length, with g = 2 gamma f_R |Im h(W)|. A real multiplicative noise
  // Gamma_R achieves this when its correlation spectrum is
  //   C(W) = hbar w0 * 2 gamma f_R |Im h(W)| (n_th(|W|) + 1/2).
  void build_raman_noise_spectrum() {
    constexpr double kHbar = 1.054571817e-34;  // J s
    constexpr double kBoltzmann = 1.380649e-23;
    const int n = grid_->n_points();
    noise_amplitude_.assign(n, 0.0);
    for (int k = 0; k < n; ++k) {
      const double w = std::abs(grid_->omega()[k]);
      if (w == 0.0) continue;
      const double x = kHbar * w * 1e12 / (kBoltzmann * cfg_.temperature_k);
      const double occupation = 1.0 / std::expm1(x) + 0.5;
      const double spectrum = photon_energy_ * 2.0 * fiber_.gamma() * raman_fraction_ *
                              std::abs(raman_transfer(fiber_.raman, grid_->omega()[k]).imag()) * occupation;
      noise_amplitude_[k] = std::sqrt(spectrum / grid_->dt());
    }
  }

  void draw_raman_noise(double h, std::vector<double>& noise, CounterRng& rng) const {
    const std::size_t n = noise_amplitude_.size();
    FieldBuffer w(n);
    for (std::size_t j = 0; j < n; j += 2) {
      const auto [a, b] = rng.normal_pair();
      w[j] = a;
      if (j + 1 < n) w[j + 1] = b;
    }
    plan_->to_spectrum(w);
    const double sh = std::sqrt(h);
    for (std::size_t k = 0; k < n; ++k) w[k] *= noise_amplitude_[k] * sh;
    plan_->to_time(w);
    noise.resize(n);
    for (std::size_t j = 0; j < n; ++j) noise[j] = w[j].real() / static_cast<double>(n);
  }

  GridPtr grid_;
  FiberParams fiber_;
  PropagationConfig cfg_;
  std::shared_ptr<const FftPlan> plan_;
  double photon_energy_;
  double raman_fraction_ = 0.0;
  FieldBuffer raman_transfer_;  // includes the 1/n of the inverse transform
  std::vector<double> noise_amplitude_;
  std::map<double, FieldBuffer> operators_;
  std::vector<Segment> segments_;
};

/// Single trajectory: optional vacuum noise from stream (cfg.seed, 0), then
/// split-step evolution. Returns the envelope at each snapshot distance.
inline std::vector<ComplexEnvelope> propagate(const ComplexEnvelope& env, const FiberParams& fiber,
                                              const PropagationConfig& cfg) {
  SplitStepPropagator stepper(env.grid_ptr(), fiber, cfg, env.photon_energy_pj());
  CounterRng rng(cfg.seed, 0);
  std::vector<Complex> field(env.samples().begin(), env.samples().end());
  if (cfg.quantum_noise) add_vacuum_noise(field, env.grid().dt(), env.photon_energy_pj(), rng);
  auto snaps = stepper.run(field, rng);
  std::vector<ComplexEnvelope> out;
  out.reserve(snaps.size());
  for (auto& s : snaps) out.push_back(env.with_samples(std::move(s)));
  return out;
}

}  // namespace fibersqz
