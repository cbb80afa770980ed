// Acceptance suite: one line per criterion, fixed seed, pinned tolerances.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "fibersqz/dataset_io.hpp"
#include "fibersqz/ensemble.hpp"
#include "fibersqz/soliton.hpp"
#include "fibersqz/squeezing.hpp"
#include "fibersqz/stepping.hpp"
#include "fibersqz/sweep.hpp"

using namespace fibersqz;

namespace {

constexpr std::uint64_t kSeed = 1;

// Pinned tolerances.
constexpr double kShotNoiseTolDb = 0.15;
constexpr double kKerrRelTol = 0.05;
constexpr double kSolitonPeakTol = 0.01;
constexpr double kSsfsReference = 0.196;
constexpr double kSsfsRelTol = 0.20;
constexpr double kSaturationTargetDb = -6.0;
constexpr double kSaturationTolDb = 1.5;
constexpr double kEstimatorTolDb = 0.2;
constexpr double kRankCorrelationMin = 0.8;
constexpr double kSolitonNumberTol = 0.25;
constexpr double kKConstancyTol = 0.30;
constexpr double kUncertaintySigmas = 3.0;

struct Ensemble {
  std::string label;
  SqueezingResult dark_plane;
  SqueezingResult homodyne;
};

std::vector<Ensemble> suite;   // calibrated results of every stochastic ensemble
int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] C%d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

PropagationConfig single_snapshot(double z, double dz) {
  PropagationConfig c;
  c.total_length_m = z;
  c.dz_m = dz;
  c.snapshot_distances = {z};
  c.seed = kSeed;
  return c;
}

Ensemble measure(const std::string& label, const ComplexEnvelope& input, const FiberParams& fiber,
                 const PropagationConfig& cfg, int n) {
  const auto baseline = shot_noise_baseline(input, fiber, cfg, n, 1);
  const auto ens = run_ensemble(input, fiber, cfg, n, 1);
  const auto m = measure_squeezing(ens, cfg.snapshot_distances.back(), baseline);
  Ensemble e{label, m.dark_plane, m.homodyne};
  suite.push_back(e);
  return e;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * double(i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// 1. gamma = 0 ensemble calibrated against an independent gamma = 0 baseline.
void shot_noise_calibration() {
  const auto t0 = std::chrono::steady_clock::now();
  PulseSpec spec;
  const auto input = sech_pulse(make_grid(512, 10.0), spec);
  FiberParams linear;
  linear.gamma_per_w_km = 0.0;
  // A linear step is exact, so one step spans the fiber.
  const auto e = measure("shot-noise", input, linear, single_snapshot(30.0, 30.0), 5000);
  const bool pass = std::abs(e.dark_plane.squeezing_db) <= kShotNoiseTolDb &&
                    std::abs(e.homodyne.squeezing_db) <= kShotNoiseTolDb;
  report(1, "shot-noise calibration", pass,
         fmt("dark-plane %+.3f dB, homodyne %+.3f dB (tol +-%.2f dB, n=5000, grid 512, %.0f s)",
             e.dark_plane.squeezing_db, e.homodyne.squeezing_db, kShotNoiseTolDb, elapsed(t0)));
}

// 2. Flat-top field under pure Kerr against the linearized quadrature transfer.
void kerr_oracle() {
  const auto grid = make_grid(256, 10.0);
  const ComplexEnvelope cw(grid, std::vector<Complex>(256, Complex(1.0, 0.0)));  // 1 W
  FiberParams kerr;
  kerr.beta2_ps2_per_km = 0.0;
  kerr.beta3_ps3_per_km = 0.0;
  kerr.raman.enabled = false;
  bool pass = true;
  std::string detail;
  for (double phi : {0.5, 1.0, 2.0}) {
    const double oracle = 1.0 + 2.0 * phi * phi - 2.0 * phi * std::sqrt(1.0 + phi * phi);
    const double z = phi / kerr.gamma();
    const auto e = measure(fmt("kerr phi=%.1f", phi), cw, kerr, single_snapshot(z, z), 5000);
    const double dev = e.dark_plane.v_min / oracle - 1.0;
    pass = pass && std::abs(dev) <= kKerrRelTol;
    detail += fmt("phi=%.1f V=%.4f oracle=%.4f (%+.1f%%, homodyne %+.1f%%); ", phi, e.dark_plane.v_min, oracle,
                  100.0 * dev, 100.0 * (e.homodyne.v_min / oracle - 1.0));
  }
  report(2, "Kerr analytic oracle", pass, detail + fmt("tol %.0f%%, n=5000", 100.0 * kKerrRelTol));
}

// 3. Classical N = 1 soliton without Raman and third-order dispersion.
void soliton_invariance() {
  FiberParams f;
  f.beta3_ps3_per_km = 0.0;
  f.raman.enabled = false;
  PulseSpec spec;
  spec.fwhm_ps = 0.2;
  spec.energy_pj = soliton_energy(f, 0.2);
  const auto input = sech_pulse(default_grid_for(spec), spec);
  auto cfg = single_snapshot(30.0, 0.005);
  cfg.quantum_noise = false;
  cfg.snapshot_distances = linear_axis(1.0, 30.0, 30);
  const double p0 = pulse_metrics(input).peak_power_w;
  double worst = 0.0;
  for (const auto& env : propagate(input, f, cfg)) {
    worst = std::max(worst, std::abs(pulse_metrics(env).peak_power_w / p0 - 1.0));
  }
  report(3, "classical soliton invariance", worst < kSolitonPeakTol,
         fmt("E=%.2f pJ, max peak-power deviation over 30 m %.4f%% (tol %.0f%%)", spec.energy_pj, 100.0 * worst,
             100.0 * kSolitonPeakTol));
}

// 4. Centroid drift of a Raman-on soliton, least-squares slope over 10 m.
void ssfs_rate_check() {
  const FiberParams f;
  PulseSpec spec;
  spec.fwhm_ps = 0.1 * units::kSechFwhmFactor;
  spec.energy_pj = soliton_energy(f, spec.fwhm_ps);
  const auto input = sech_pulse(default_grid_for(spec), spec);
  auto cfg = single_snapshot(10.0, 0.002);
  cfg.quantum_noise = false;
  cfg.snapshot_distances = linear_axis(0.5, 10.0, 20);
  std::vector<double> z{0.0}, w{pulse_metrics(input).spectral_centroid};
  const auto out = propagate(input, f, cfg);
  for (std::size_t k = 0; k < out.size(); ++k) {
    z.push_back(cfg.snapshot_distances[k]);
    w.push_back(pulse_metrics(out[k]).spectral_centroid);
  }
  const double mz = std::accumulate(z.begin(), z.end(), 0.0) / z.size();
  const double mw = std::accumulate(w.begin(), w.end(), 0.0) / w.size();
  double szw = 0.0, szz = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    szw += (z[k] - mz) * (w[k] - mw);
    szz += (z[k] - mz) * (z[k] - mz);
  }
  const double slope = szw / szz;
  const double dev = std::abs(slope) / kSsfsReference - 1.0;
  report(4, "SSFS rate", slope < 0.0 && std::abs(dev) <= kSsfsRelTol,
         fmt("centroid drift %.4f rad/ps/m (red), reference %.3f, deviation %+.1f%% (tol %.0f%%)", slope,
             kSsfsReference, 100.0 * dev, 100.0 * kSsfsRelTol));
}

// 5. Beam-splitter loss model.
void loss_exactness() {
  const double eps = std::numeric_limits<double>::epsilon();
  SqueezingResult r;
  r.v_min = 0.1;
  r.v_max = 10.0;
  const auto out = apply_losses(r, LossBudget{"x", 0.0, 0.0, 0.8});
  bool pass = std::abs(out.v_min - 0.28) <= 2.0 * eps * 0.28;
  pass = pass && std::abs(out.squeezing_db - 10.0 * std::log10(0.28)) <= 4.0 * eps * 5.6;
  pass = pass && std::abs(out.squeezing_db + 5.528) < 5e-4;
  const auto same = apply_losses(r, LossBudget{"x", 0.0, 0.0, 1.0});
  pass = pass && same.v_min == r.v_min && same.v_max == r.v_max;
  SqueezingResult unit;
  unit.v_min = unit.v_max = 1.0;
  double worst = 0.0;
  for (double eta = 0.01; eta < 1.0; eta += 0.01) {
    worst = std::max(worst, std::abs(apply_losses(unit, LossBudget{"x", 0.0, 0.0, eta}).v_min - 1.0));
  }
  pass = pass && worst <= 2.0 * eps;
  report(5, "loss transformation exactness", pass,
         fmt("V'=%.17g (%.6f dB), eta=1 identity, V=1 fixed point within %.1e", out.v_min, out.squeezing_db, worst));
}

// 6. Near-soliton pulse at 30 m behind fiber loss and 20 % external loss.
void loss_saturation() {
  const auto t0 = std::chrono::steady_clock::now();
  const FiberParams f;
  PulseSpec spec;
  spec.fwhm_ps = 0.25;
  spec.energy_pj = soliton_energy(f, spec.fwhm_ps);
  const auto input = sech_pulse(default_grid_for(spec), spec);
  auto cfg = single_snapshot(30.0, 0.0);
  cfg.dz_m = clamp_to_snapshots(auto_step(f, spec), cfg);
  const auto e = measure("near-soliton 30 m", input, f, cfg, 1000);
  auto budget = parse_loss_budget("fiber+20%", f);
  budget.fiber_length_m = 30.0;
  const auto lossy = apply_losses(e.dark_plane, budget);
  suite.push_back({"near-soliton 30 m fiber+20%", lossy, apply_losses(e.homodyne, budget)});
  report(6, "loss saturation", std::abs(lossy.squeezing_db - kSaturationTargetDb) <= kSaturationTolDb,
         fmt("T=0.25 ps, E=%.1f pJ, lossless %.2f dB, fiber+20%% %.2f dB (target %.1f +- %.1f dB, n=1000, %.0f s)",
             spec.energy_pj, e.dark_plane.squeezing_db, lossy.squeezing_db, kSaturationTargetDb, kSaturationTolDb,
             elapsed(t0)));
}

// 7. Dark-plane against homodyne on every ensemble measured so far.
void estimator_consistency() {
  double worst = 0.0;
  std::string where;
  for (const auto& e : suite) {
    const double d = std::abs(e.dark_plane.squeezing_db - e.homodyne.squeezing_db);
    if (d > worst) worst = d, where = e.label;
  }
  report(7, "estimator consistency", worst <= kEstimatorTolDb,
         fmt("max |dark-plane - homodyne| %.3f dB on '%s' over %zu ensembles (tol %.1f dB)", worst, where.c_str(),
             suite.size(), kEstimatorTolDb));
}

SweepSpec reduced_sweep() {
  SweepSpec s;
  s.durations_ps = linear_axis(0.14, 0.38, 5);
  s.energies_pj = log_axis(22.5, 120.0, 5);
  s.distances_m = {0.6, 15.0, 30.0};
  s.n_traj = 500;
  s.budgets = {"none"};
  s.master_seed = kSeed;
  return s;
}

// 8. Optimum location on a reduced sweep.
void optimum_properties(const SweepDataset& ds, const SweepSpec& spec) {
  // (a) shortest distance: squeezing strength against peak power.
  std::vector<double> strength, p0;
  for (const auto& r : ds.records) {
    if (r.z_m == spec.distances_m.front()) {
      strength.push_back(-r.squeezing_db);
      p0.push_back(r.P0_W);
    }
  }
  const double rho = spearman(strength, p0);
  const bool a = rho > kRankCorrelationMin;

  // (b) best cell at 30 m.
  const SweepRecord* best = nullptr;
  for (const auto& r : ds.records) {
    if (r.z_m == 30.0 && (!best || r.squeezing_db < best->squeezing_db)) best = &r;
  }
  const bool b = std::abs(best->N - 1.0) < kSolitonNumberTol;

  // (c) best-duration cells at z and 2z.
  const auto curves = extract_optima(ds);
  const auto& o15 = curves.distances[1].best_duration;
  const auto& o30 = curves.distances[2].best_duration;
  const double ratio = o30.K / o15.K;
  const bool c = std::abs(ratio - 1.0) <= kKConstancyTol;

  report(8, "optimum location", a && b && c,
         fmt("(a) %s rank corr %.3f at %.1f m (min %.1f); (b) %s best cell at 30 m T=%.2f E=%.1f S=%.2f dB N=%.3f "
             "(tol %.2f); (c) %s K(15 m)=%.4f at T=%.3f, K(30 m)=%.4f at T=%.3f, ratio %.3f (tol %.0f%%)",
             a ? "ok" : "FAIL", rho, spec.distances_m.front(), kRankCorrelationMin, b ? "ok" : "FAIL", best->T_ps,
             best->E_pJ, best->squeezing_db, best->N, kSolitonNumberTol, c ? "ok" : "FAIL", o15.K, o15.T_ps, o30.K,
             o30.T_ps, ratio, 100.0 * kKConstancyTol));
}

// 9. Same spec and seed on 1 and 8 workers.
void determinism() {
  SweepSpec s;
  s.durations_ps = {0.2, 0.3, 0.4};
  s.energies_pj = {30.0, 50.0, 80.0};
  s.distances_m = {2.0, 4.0};
  s.n_traj = 60;
  s.master_seed = kSeed;
  SweepOptions one, eight;
  one.threads = 1;
  eight.threads = 8;
  const auto a = run_sweep(s, one), b = run_sweep(s, eight);
  const bool pass = dataset_to_csv(a) == dataset_to_csv(b) && dataset_to_json(a) == dataset_to_json(b);
  report(9, "determinism", pass,
         fmt("%zu records, CSV and JSON byte-identical for 1 and 8 threads: %s", a.records.size(),
             pass ? "yes" : "no"));
}

// 10. Calibrated uncertainty product on every stochastic ensemble.
void uncertainty_product(const SweepDataset& sweep, int sweep_n) {
  double worst = std::numeric_limits<double>::infinity();
  std::string where;
  int count = 0;
  auto check = [&](double vmin, double vmax, double eps, const std::string& label) {
    const double margin = vmin * vmax - (1.0 - kUncertaintySigmas * eps);
    ++count;
    if (margin < worst) worst = margin, where = label;
  };
  for (const auto& e : suite) {
    if (e.label.find("fiber+") != std::string::npos) continue;  // lossy copies of the same ensemble
    check(e.dark_plane.v_min, e.dark_plane.v_max, e.dark_plane.stat_error, e.label + " dark-plane");
    check(e.homodyne.v_min, e.homodyne.v_max, e.homodyne.stat_error, e.label + " homodyne");
  }
  const double eps = std::sqrt(2.0 / (sweep_n - 1));
  for (const auto& r : sweep.records) {
    check(from_db(r.squeezing_db), from_db(r.antisqueezing_db), eps,
          fmt("sweep T=%.2f E=%.1f z=%.1f", r.T_ps, r.E_pJ, r.z_m));
  }
  report(10, "uncertainty product", worst >= 0.0,
         fmt("min of Vmin*Vmax - (1 - 3 eps) = %.4f on '%s' over %d checks", worst, where.c_str(), count));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  std::printf("acceptance suite, seed %llu\n", static_cast<unsigned long long>(kSeed));
  try {
    shot_noise_calibration();
    kerr_oracle();
    soliton_invariance();
    ssfs_rate_check();
    loss_exactness();
    loss_saturation();
    estimator_consistency();
    const auto spec = reduced_sweep();
    const auto ts = std::chrono::steady_clock::now();
    SweepOptions opts;
    opts.threads = 0;
    const auto ds = run_sweep(spec, opts);
    std::printf("reduced sweep: %zu records in %.0f s\n", ds.records.size(), elapsed(ts));
    optimum_properties(ds, spec);
    determinism();
    uncertainty_product(ds, spec.n_traj);
  } catch (const std::exception& e) {
    std::printf("[FAIL] acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d of 10 criteria failed, %.0f s total\n", failures, elapsed(t0));
  return failures == 0 ? 0 : 1;
}
