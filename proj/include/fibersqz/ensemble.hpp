#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "fibersqz/fiber.hpp"
#include "fibersqz/grid.hpp"
#include "fibersqz/parallel.hpp"
#include "fibersqz/propagation.hpp"
#include "fibersqz/rng.hpp"

namespace fibersqz {

/// Stochastic realizations of one input pulse; snapshots[d][i] is trajectory
/// i at distance distances[d].
struct TrajectoryEnsemble {
  GridPtr grid;
  std::vector<double> distances;
  std::vector<std::vector<ComplexEnvelope>> snapshots;
  PulseSpec input_spec;
  FiberParams fiber;
  PropagationConfig config;
  std::uint64_t master_seed = 0;
  double carrier_wavelength_um = kDefaultWavelengthUm;

  int n_traj() const { return snapshots.empty() ? 0 : static_cast<int>(snapshots.front().size()); }
  double photon_energy_pj() const { return units::photon_energy_pj(carrier_wavelength_um); }

  std::size_t distance_index(double z) const {
    for (std::size_t d = 0; d < distances.size(); ++d) {
      if (std::abs(distances[d] - z) <= 1e-9 * std::max(1.0, std::abs(z))) return d;
    }
    std::ostringstream msg;
    msg << "no snapshot recorded at z = " << z << " m";
    throw std::invalid_argument(msg.str());
  }

  const std::vector<ComplexEnvelope>& at(double z) const { return snapshots[distance_index(z)]; }
};

/// Runs n_traj trajectories of `input`. Trajectory i draws all of its noise
/// from stream (cfg.seed, i), so the result does not depend on `threads`.
inline TrajectoryEnsemble run_ensemble(const ComplexEnvelope& input, const FiberParams& fiber,
                                       const PropagationConfig& cfg, int n_traj, int threads = 0) {
  if (n_traj < 2) throw std::invalid_argument("run_ensemble: n_traj must be at least 2");
  const SplitStepPropagator stepper(input.grid_ptr(), fiber, cfg, input.photon_energy_pj());

  const auto n = static_cast<std::size_t>(n_traj);
  std::vector<std::vector<std::vector<Complex>>> raw(n);
  parallel_for(n, threads, [&](std::size_t i) {
    CounterRng rng(cfg.seed, i);
    std::vector<Complex> field(input.samples().begin(), input.samples().end());
    if (cfg.quantum_noise) add_vacuum_noise(field, input.grid().dt(), input.photon_energy_pj(), rng);
    try {
      raw[i] = stepper.run(field, rng);
    } catch (const PropagationError& e) {
      std::ostringstream msg;
      msg << "trajectory " << i << " failed (seed " << cfg.seed << "): " << e.what();
      throw PropagationError(msg.str());
    }
  });

  TrajectoryEnsemble ens;
  ens.grid = input.grid_ptr();
  ens.distances = cfg.snapshot_distances;
  ens.fiber = fiber;
  ens.config = cfg;
  ens.master_seed = cfg.seed;
  ens.carrier_wavelength_um = input.carrier_wavelength_um();
  ens.snapshots.resize(ens.distances.size());
  for (std::size_t d = 0; d < ens.distances.size(); ++d) {
    ens.snapshots[d].reserve(n);
    for (std::size_t i = 0; i < n; ++i) ens.snapshots[d].push_back(input.with_samples(std::move(raw[i][d])));
  }
  return ens;
}

/// Sech input on the default grid for `spec`.
inline TrajectoryEnsemble run_ensemble(const PulseSpec& spec, const FiberParams& fiber,
                                       const PropagationConfig& cfg, int n_traj, int threads = 0) {
  const auto grid = default_grid_for(spec);
  auto ens = run_ensemble(sech_pulse(grid, spec), fiber, cfg, n_traj, threads);
  ens.input_spec = spec;
  return ens;
}

}  // namespace fibersqz
