#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fibersqz/ensemble.hpp"
#include "fibersqz/rng.hpp"
#include "fibersqz/units.hpp"

namespace fibersqz {

inline double to_db(double variance) { return 10.0 * std::log10(variance); }
inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

/// Stokes vectors (S0, S1, S2, S3) in photon numbers, one per (H, V) pair.
struct StokesSampleSet {
  std::vector<std::array<double, 4>> samples;
  double distance_m = 0.0;
  int n_traj = 0;
  int rounds = 0;
  std::uint64_t pairing_seed = 0;
  std::string scheme;

  int pair_count() const { return static_cast<int>(samples.size()); }
};

enum class Estimator { kDarkPlane, kHomodyne };

inline const char* estimator_name(Estimator e) { return e == Estimator::kDarkPlane ? "dark_plane" : "homodyne"; }

/// Shot-noise-normalized quadrature variances, already divided by `baseline`.
struct SqueezingResult {
  Estimator estimator = Estimator::kDarkPlane;
  double distance_m = 0.0;
  double v_min = 1.0;
  double v_max = 1.0;
  double theta_opt = 0.0;
  double squeezing_db = 0.0;
  double antisqueezing_db = 0.0;
  double baseline = 1.0;
  /// Relative standard error of a normalized variance, sqrt(2/(n-1)).
  double stat_error = 0.0;
  int n_samples = 0;

  /// Standard error of squeezing_db implied by stat_error.
  double stat_error_db() const { return 10.0 / std::log(10.0) * stat_error; }
};

struct LossBudget {
  std::string tag = "none";
  double fiber_length_m = 0.0;
  double intrinsic_loss_db_per_km = 0.0;
  double external_efficiency = 1.0;

  double total_efficiency() const {
    return external_efficiency * std::pow(10.0, -intrinsic_loss_db_per_km * fiber_length_m * 1e-3 / 10.0);
  }
};

/// The four budgets compared in the loss study: lossless, fiber loss only,
/// fiber loss plus 5 % and plus 20 % external loss.
inline std::vector<LossBudget> standard_loss_budgets(double intrinsic_loss_db_per_km) {
  return {{"none", 0.0, 0.0, 1.0},
          {"fiber", 0.0, intrinsic_loss_db_per_km, 1.0},
          {"fiber+5%", 0.0, intrinsic_loss_db_per_km, 0.95},
          {"fiber+20%", 0.0, intrinsic_loss_db_per_km, 0.80}};
}

namespace detail {

// Uniform random derangement (no fixed points) by rejection of shuffles.
inline std::vector<std::size_t> random_derangement(std::size_t n, CounterRng& rng) {
  std::vector<std::size_t> p(n);
  for (;;) {
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) std::swap(p[i], p[rng.below(i + 1)]);
    bool fixed = false;
    for (std::size_t i = 0; i < n && !fixed; ++i) fixed = p[i] == i;
    if (!fixed) return p;
  }
}

struct ThetaScan {
  double v_min, v_max, theta_min;
};

// V(theta) = c11 cos^2 + 2 c12 sin cos + c22 sin^2 over theta in [0, pi) on
// 720 points, each extremum refined by a parabola through its neighbours.
inline ThetaScan scan_theta(double c11, double c12, double c22) {
  constexpr int kPoints = 720;
  const double step = units::kPi / kPoints;
  auto v = [&](double th) {
    const double c = std::cos(th), s = std::sin(th);
    return c11 * c * c + 2.0 * c12 * s * c + c22 * s * s;
  };
  int imin = 0, imax = 0;
  std::vector<double> values(kPoints);
  for (int k = 0; k < kPoints; ++k) {
    values[k] = v(k * step);
    if (values[k] < values[imin]) imin = k;
    if (values[k] > values[imax]) imax = k;
  }
  auto refine = [&](int k) {
    const double ym = values[(k + kPoints - 1) % kPoints];
    const double y0 = values[k];
    const double yp = values[(k + 1) % kPoints];
    const double denom = ym - 2.0 * y0 + yp;
    const double offset = denom != 0.0 ? 0.5 * (ym - yp) / denom : 0.0;
    return std::pair{y0 - 0.25 * (ym - yp) * offset, (k + offset) * step};
  };
  const auto [vmin, thmin] = refine(imin);
  const auto [vmax, thmax] = refine(imax);
  double theta = std::fmod(thmin, units::kPi);
  if (theta < 0.0) theta += units::kPi;
  return {vmin, vmax, theta};
}

inline SqueezingResult make_result(Estimator est, double distance, double c11, double c12, double c22,
                                   double shot_noise, double baseline, int n_samples) {
  if (!(baseline > 0.0)) throw std::invalid_argument("shot-noise baseline must be positive");
  const auto scan = scan_theta(c11 / shot_noise, c12 / shot_noise, c22 / shot_noise);
  SqueezingResult r;
  r.estimator = est;
  r.distance_m = distance;
  r.baseline = baseline;
  r.v_min = scan.v_min / baseline;
  r.v_max = scan.v_max / baseline;
  r.theta_opt = scan.theta_min;
  r.squeezing_db = to_db(r.v_min);
  r.antisqueezing_db = to_db(r.v_max);
  r.n_samples = n_samples;
  r.stat_error = std::sqrt(2.0 / (n_samples - 1));
  return r;
}

}  // namespace detail

/// Stokes vector (S0, S1, S2, S3) in photons of the pulse pair with `h` in
/// the H and `v` in the V polarization.
inline std::array<double, 4> stokes_vector(const ComplexEnvelope& h, const ComplexEnvelope& v) {
  if (h.grid().n_points() != v.grid().n_points()) throw std::invalid_argument("stokes_vector: grids differ");
  const double to_photons = h.grid().dt() / h.photon_energy_pj();
  double nh = 0.0, nv = 0.0;
  Complex overlap{0.0, 0.0};
  const auto a = h.samples(), b = v.samples();
  for (std::size_t j = 0; j < a.size(); ++j) {
    nh += std::norm(a[j]);
    nv += std::norm(b[j]);
    overlap += std::conj(a[j]) * b[j];
  }
  nh *= to_photons;
  nv *= to_photons;
  overlap *= 2.0 * to_photons;
  return {nh + nv, nh - nv, overlap.real(), overlap.imag()};
}

/// Pairs trajectories as orthogonally polarized pulses. Each round draws an
/// independent random derangement p of the trajectory indices and forms the
/// pairs (H, V) = (i, p(i)), so every trajectory appears once per round in
/// each role and never with itself.
inline StokesSampleSet stokes_samples(const TrajectoryEnsemble& ens, double distance_m,
                                      std::uint64_t pairing_seed, int rounds = 8) {
  const auto& traj = ens.at(distance_m);
  const std::size_t n = traj.size();
  if (n < 2) throw std::invalid_argument("stokes_samples: need at least 2 trajectories");
  if (rounds < 1) throw std::invalid_argument("stokes_samples: rounds must be positive");

  const double dt = ens.grid->dt();
  const double to_photons = dt / ens.photon_energy_pj();
  std::vector<double> energy(n);
  for (std::size_t i = 0; i < n; ++i) energy[i] = traj[i].energy() / ens.photon_energy_pj();

  StokesSampleSet set;
  set.distance_m = distance_m;
  set.n_traj = static_cast<int>(n);
  set.rounds = rounds;
  set.pairing_seed = pairing_seed;
  set.scheme = "derangement";
  set.samples.reserve(n * rounds);
  for (int r = 0; r < rounds; ++r) {
    CounterRng rng(pairing_seed, static_cast<std::uint64_t>(r));
    const auto partner = detail::random_derangement(n, rng);
    for (std::size_t i = 0; i < n; ++i) {
      const auto h = traj[i].samples();
      const auto v = traj[partner[i]].samples();
      Complex overlap{0.0, 0.0};
      for (std::size_t j = 0; j < h.size(); ++j) overlap += std::conj(h[j]) * v[j];
      overlap *= 2.0 * to_photons;
      set.samples.push_back({energy[i] + energy[partner[i]], energy[i] - energy[partner[i]], overlap.real(),
                             overlap.imag()});
    }
  }
  return set;
}

/// Variance of the Stokes projection on the plane orthogonal to the mean
/// Stokes vector, minimized over the in-plane angle and normalized by <S0>.
inline SqueezingResult dark_plane_squeezing(const StokesSampleSet& set, double baseline = 1.0) {
  const auto m = static_cast<double>(set.samples.size());
  if (set.samples.size() < 2) throw std::invalid_argument("dark_plane_squeezing: need at least 2 samples");
  std::array<double, 4> mean{};
  for (const auto& s : set.samples) {
    for (int c = 0; c < 4; ++c) mean[c] += s[c];
  }
  for (auto& v : mean) v /= m;
  const double length = std::sqrt(mean[1] * mean[1] + mean[2] * mean[2] + mean[3] * mean[3]);
  if (!(length > 1e-12 * mean[0]) || !(length > 0.0)) {
    throw std::invalid_argument("dark_plane_squeezing: mean Stokes vector vanishes");
  }
  const std::array<double, 3> e{mean[1] / length, mean[2] / length, mean[3] / length};
  // First in-plane axis: cross product with the coordinate axis least aligned with e.
  int axis = 0;
  for (int c = 1; c < 3; ++c) {
    if (std::abs(e[c]) < std::abs(e[axis])) axis = c;
  }
  std::array<double, 3> a{0.0, 0.0, 0.0};
  a[axis] = 1.0;
  auto cross = [](const std::array<double, 3>& x, const std::array<double, 3>& y) {
    return std::array<double, 3>{x[1] * y[2] - x[2] * y[1], x[2] * y[0] - x[0] * y[2], x[0] * y[1] - x[1] * y[0]};
  };
  auto e1 = cross(e, a);
  const double n1 = std::sqrt(e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]);
  for (auto& v : e1) v /= n1;
  const auto e2 = cross(e, e1);

  double c11 = 0.0, c12 = 0.0, c22 = 0.0;
  for (const auto& s : set.samples) {
    const double d1 = s[1] - mean[1], d2 = s[2] - mean[2], d3 = s[3] - mean[3];
    const double p1 = d1 * e1[0] + d2 * e1[1] + d3 * e1[2];
    const double p2 = d1 * e2[0] + d2 * e2[1] + d3 * e2[2];
    c11 += p1 * p1;
    c12 += p1 * p2;
    c22 += p2 * p2;
  }
  c11 /= m - 1.0;
  c12 /= m - 1.0;
  c22 /= m - 1.0;
  return detail::make_result(Estimator::kDarkPlane, set.distance_m, c11, c12, c22, mean[0], baseline, set.n_traj);
}

/// Quadrature variance of each trajectory's fluctuation projected on the
/// ensemble-mean field, X(theta) = 2 Re[exp(i theta) <u|dA>] in photon units.
/// Equivalent to detecting the Stokes component with the orthogonal pulse as
/// local oscillator, but uses no pairing.
inline SqueezingResult homodyne_squeezing(const TrajectoryEnsemble& ens, double distance_m, double baseline = 1.0) {
  const auto& traj = ens.at(distance_m);
  const std::size_t n = traj.size();
  if (n < 2) throw std::invalid_argument("homodyne_squeezing: need at least 2 trajectories");
  const std::size_t points = static_cast<std::size_t>(ens.grid->n_points());
  const double to_amplitude = std::sqrt(ens.grid->dt() / ens.photon_energy_pj());

  std::vector<Complex> mean(points, Complex{});
  for (const auto& env : traj) {
    const auto s = env.samples();
    for (std::size_t j = 0; j < points; ++j) mean[j] += s[j];
  }
  double norm = 0.0;
  for (auto& u : mean) {
    u *= to_amplitude / static_cast<double>(n);
    norm += std::norm(u);
  }
  if (!(norm > 0.0)) throw std::invalid_argument("homodyne_squeezing: mean field vanishes");
  const double inv_norm = 1.0 / std::sqrt(norm);

  std::vector<Complex> proj(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = traj[i].samples();
    Complex acc{};
    for (std::size_t j = 0; j < points; ++j) acc += std::conj(mean[j]) * (s[j] * to_amplitude - mean[j]);
    proj[i] = acc * inv_norm;
  }
  double c11 = 0.0, c12 = 0.0, c22 = 0.0;
  for (const auto& c : proj) {
    const double x = 2.0 * c.real(), p = -2.0 * c.imag();
    c11 += x * x;
    c12 += x * p;
    c22 += p * p;
  }
  const double dof = static_cast<double>(n) - 1.0;
  return detail::make_result(Estimator::kHomodyne, distance_m, c11 / dof, c12 / dof, c22 / dof, 1.0, baseline,
                             static_cast<int>(n));
}

/// Beam-splitter model of loss: V' = eta V + (1 - eta) for both extrema.
inline SqueezingResult apply_losses(const SqueezingResult& result, const LossBudget& budget) {
  const double eta = budget.total_efficiency();
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("apply_losses: efficiency outside (0, 1]");
  SqueezingResult out = result;
  out.v_min = eta * result.v_min + (1.0 - eta);
  out.v_max = eta * result.v_max + (1.0 - eta);
  out.squeezing_db = to_db(out.v_min);
  out.antisqueezing_db = to_db(out.v_max);
  return out;
}

/// Shot-noise levels of both estimators at each snapshot distance, measured
/// on a gamma = 0 copy of the run. Uses a seed stream disjoint from cfg.seed.
struct ShotNoiseBaseline {
  std::vector<double> distances;
  std::vector<double> dark_plane;
  std::vector<double> homodyne;

  std::size_t index(double z) const {
    for (std::size_t d = 0; d < distances.size(); ++d) {
      if (std::abs(distances[d] - z) <= 1e-9 * std::max(1.0, std::abs(z))) return d;
    }
    throw std::invalid_argument("shot-noise baseline missing for requested distance");
  }
  double for_estimator(Estimator e, double z) const {
    return e == Estimator::kDarkPlane ? dark_plane[index(z)] : homodyne[index(z)];
  }
};

inline constexpr std::uint64_t kBaselineStream = 0xba5e11e5ULL;
inline constexpr std::uint64_t kPairingStream = 0x9a112e5ULL;

inline std::uint64_t baseline_seed(std::uint64_t seed) { return derive_key(seed, kBaselineStream); }
inline std::uint64_t pairing_seed_for(std::uint64_t seed) { return derive_key(seed, kPairingStream); }

inline ShotNoiseBaseline shot_noise_baseline(const ComplexEnvelope& input, const FiberParams& fiber,
                                             const PropagationConfig& cfg, int n_traj, int threads = 0) {
  FiberParams linear = fiber;
  linear.gamma_per_w_km = 0.0;
  PropagationConfig base = cfg;
  base.seed = baseline_seed(cfg.seed);
  base.raman_noise = false;
  base.quantum_noise = true;
  // A gamma = 0 step is exact, so one step per snapshot interval suffices.
  base.dz_m = cfg.total_length_m;
  double previous = 0.0;
  for (double z : cfg.snapshot_distances) {
    if (z > previous) base.dz_m = std::min(base.dz_m, z - previous);
    previous = z;
  }
  const auto ens = run_ensemble(input, linear, base, n_traj, threads);
  ShotNoiseBaseline b;
  b.distances = cfg.snapshot_distances;
  const auto pairing = pairing_seed_for(base.seed);
  for (double z : b.distances) {
    const auto dp = dark_plane_squeezing(stokes_samples(ens, z, pairing));
    const auto hd = homodyne_squeezing(ens, z);
    b.dark_plane.push_back(0.5 * (dp.v_min + dp.v_max));
    b.homodyne.push_back(0.5 * (hd.v_min + hd.v_max));
  }
  return b;
}

inline ShotNoiseBaseline shot_noise_baseline(const PulseSpec& spec, const FiberParams& fiber,
                                             const PropagationConfig& cfg, int n_traj, int threads = 0) {
  return shot_noise_baseline(sech_pulse(default_grid_for(spec), spec), fiber, cfg, n_traj, threads);
}

/// Both estimators at one distance, calibrated against `baseline`.
struct SqueezingPair {
  SqueezingResult dark_plane;
  SqueezingResult homodyne;
};

inline SqueezingPair measure_squeezing(const TrajectoryEnsemble& ens, double z, const ShotNoiseBaseline& baseline) {
  const auto pairing = pairing_seed_for(ens.master_seed);
  return {dark_plane_squeezing(stokes_samples(ens, z, pairing), baseline.for_estimator(Estimator::kDarkPlane, z)),
          homodyne_squeezing(ens, z, baseline.for_estimator(Estimator::kHomodyne, z))};
}

}  // namespace fibersqz
