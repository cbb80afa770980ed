#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "fibersqz/ensemble.hpp"
#include "fibersqz/fiber.hpp"
#include "fibersqz/grid.hpp"
#include "fibersqz/squeezing.hpp"

namespace fibersqz {

/// L_D = tau^2 / |beta2| in m (infinite without dispersion).
inline double dispersion_length(const FiberParams& fiber, const PulseSpec& spec) {
  const double b2 = std::abs(fiber.beta2());
  return b2 > 0.0 ? spec.tau_ps() * spec.tau_ps() / b2 : std::numeric_limits<double>::infinity();
}

/// L_NL = 1 / (gamma P0) in m (infinite without Kerr).
inline double nonlinear_length(const FiberParams& fiber, const PulseSpec& spec) {
  const double g = fiber.gamma() * spec.peak_power_w();
  return g > 0.0 ? 1.0 / g : std::numeric_limits<double>::infinity();
}

/// dz = fraction * min(L_D, L_NL), capped at max_dz_m.
struct StepPolicy {
  double fraction = 0.025;
  double max_dz_m = 0.1;

  void validate() const {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("step.fraction must lie in (0, 1]");
    if (!(max_dz_m > 0.0)) throw std::invalid_argument("step.max_dz must be positive");
  }
};

inline double auto_step(const FiberParams& fiber, const PulseSpec& spec, const StepPolicy& policy = {}) {
  policy.validate();
  const double scale = std::min(dispersion_length(fiber, spec), nonlinear_length(fiber, spec));
  return std::min(policy.max_dz_m, policy.fraction * scale);
}

/// Largest dz allowed by the snapshot spacing in cfg.
inline double clamp_to_snapshots(double dz, const PropagationConfig& cfg) {
  double previous = 0.0;
  for (double z : cfg.snapshot_distances) {
    if (z > previous) dz = std::min(dz, z - previous);
    previous = z;
  }
  return dz;
}

struct ConvergenceReport {
  double dz_m = 0.0;        // finest step of the accepted pair
  double change_db = 0.0;   // |S(dz) - S(2 dz)| at the last snapshot
  int halvings = 0;
  std::vector<double> tried_dz;
  std::vector<double> squeezing_db;
};

/// Halves cfg.dz until the dark-plane squeezing of an n_traj pilot ensemble
/// at the last snapshot changes by less than tol_db. Every pilot run uses
/// the same seed, so the difference is pure discretization error.
inline ConvergenceReport convergence_check(const PulseSpec& spec, const FiberParams& fiber, PropagationConfig cfg,
                                           int n_traj = 200, double tol_db = 0.1, int max_halvings = 6,
                                           int threads = 0) {
  const auto input = sech_pulse(default_grid_for(spec), spec);
  const double z = cfg.snapshot_distances.back();
  auto measure = [&](double dz) {
    cfg.dz_m = dz;
    const auto ens = run_ensemble(input, fiber, cfg, n_traj, threads);
    return dark_plane_squeezing(stokes_samples(ens, z, pairing_seed_for(cfg.seed))).squeezing_db;
  };
  ConvergenceReport rep;
  double dz = cfg.dz_m;
  rep.tried_dz.push_back(dz);
  rep.squeezing_db.push_back(measure(dz));
  for (int h = 1; h <= max_halvings; ++h) {
    dz *= 0.5;
    rep.tried_dz.push_back(dz);
    rep.squeezing_db.push_back(measure(dz));
    rep.change_db = std::abs(rep.squeezing_db.back() - rep.squeezing_db[rep.squeezing_db.size() - 2]);
    rep.halvings = h;
    rep.dz_m = dz;
    if (rep.change_db < tol_db) return rep;
  }
  std::ostringstream msg;
  msg << "convergence_check: squeezing still changes by " << rep.change_db << " dB after " << max_halvings
      << " halvings (dz = " << dz << " m)";
  throw std::runtime_error(msg.str());
}

}  // namespace fibersqz
