#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fibersqz/ensemble.hpp"
#include "fibersqz/propagation.hpp"
#include "fibersqz/stepping.hpp"

using namespace fibersqz;

namespace {

FiberParams soliton_fiber() {
  FiberParams f;
  f.beta3_ps3_per_km = 0.0;
  f.raman.enabled = false;
  return f;
}

PropagationConfig classical(double length, double dz) {
  PropagationConfig c;
  c.total_length_m = length;
  c.dz_m = dz;
  c.snapshot_distances = {length};
  c.quantum_noise = false;
  return c;
}

}  // namespace

TEST(VacuumNoise, PhotonEnergyAndVariance) {
  EXPECT_NEAR(units::photon_energy_pj(1.56) * 1e-12, 1.2734e-19, 0.0005e-19);
  const auto grid = make_grid(256, 2.56);  // dt = 0.01 ps
  const double hw = units::photon_energy_pj(1.56);
  EXPECT_NEAR(hw / (2.0 * grid->dt()), 6.37e-6, 0.01e-6);

  std::vector<Complex> field(grid->n_points());
  double total = 0.0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) {
    std::fill(field.begin(), field.end(), Complex{});
    CounterRng rng(11, r);
    add_vacuum_noise(field, grid->dt(), hw, rng);
    for (const auto& a : field) total += std::norm(a);
  }
  const double per_sample = total / (reps * grid->n_points());
  EXPECT_NEAR(per_sample / (hw / (2.0 * grid->dt())), 1.0, 0.01);
  // Noise-only energy in photons: half a photon per temporal mode.
  EXPECT_NEAR(per_sample * grid->dt() / hw * grid->n_points(), grid->n_points() / 2.0, 0.01 * grid->n_points());
}

TEST(Propagation, LinearRunMatchesDispersionStep) {
  FiberParams f;
  f.gamma_per_w_km = 0.0;
  PulseSpec spec;
  const auto input = sech_pulse(default_grid_for(spec), spec);
  const auto out = propagate(input, f, classical(20.0, 0.5)).back();
  const auto ref = dispersion_step(input, f, 20.0, false);
  EXPECT_NEAR(out.energy() / input.energy(), 1.0, 1e-10);
  double worst = 0.0;
  for (std::size_t j = 0; j < ref.samples().size(); ++j) {
    worst = std::max(worst, std::abs(out.samples()[j] - ref.samples()[j]));
  }
  EXPECT_LT(worst, 1e-9 * std::sqrt(spec.peak_power_w()));
}

TEST(Propagation, FundamentalSolitonKeepsPeakPower) {
  PulseSpec spec;  // T = 0.2 ps, E = 61.7 pJ
  const auto input = sech_pulse(default_grid_for(spec), spec);
  auto cfg = classical(30.0, 0.005);
  cfg.snapshot_distances = {10.0, 20.0, 30.0};
  const double p0 = pulse_metrics(input).peak_power_w;
  for (const auto& env : propagate(input, soliton_fiber(), cfg)) {
    EXPECT_LT(std::abs(pulse_metrics(env).peak_power_w / p0 - 1.0), 0.01);
    EXPECT_NEAR(env.energy() / input.energy(), 1.0, 1e-9);
  }
}

TEST(Propagation, RamanShiftsSpectrumRed) {
  FiberParams f;
  f.beta3_ps3_per_km = 0.0;
  PulseSpec spec;
  spec.fwhm_ps = 0.1 * units::kSechFwhmFactor;
  spec.energy_pj = 70.0;
  const auto input = sech_pulse(default_grid_for(spec), spec);
  const auto out = propagate(input, f, classical(2.0, 0.002)).back();
  EXPECT_LT(pulse_metrics(out).spectral_centroid, -0.1);
}

TEST(Propagation, DistributedLossAttenuates) {
  FiberParams f;
  f.intrinsic_loss_db_per_km = 100.0;
  auto cfg = classical(10.0, 0.01);
  cfg.distributed_loss = true;
  PulseSpec spec;
  const auto input = sech_pulse(default_grid_for(spec), spec);
  const auto out = propagate(input, f, cfg).back();
  EXPECT_NEAR(out.energy() / input.energy(), f.transmission(10.0), 1e-9);
}

TEST(Propagation, NonFiniteFieldIsReported) {
  PulseSpec spec;
  const auto input = sech_pulse(default_grid_for(spec), spec);
  std::vector<Complex> s(input.samples().begin(), input.samples().end());
  s[10] = Complex(std::numeric_limits<double>::quiet_NaN(), 0.0);
  EXPECT_THROW(propagate(input.with_samples(s), FiberParams{}, classical(1.0, 0.1)), PropagationError);
}

TEST(Propagation, ConfigValidation) {
  PropagationConfig c;
  c.snapshot_distances = {10.0, 5.0};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.snapshot_distances = {40.0};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.snapshot_distances = {1.0, 1.001};
  c.dz_m = 0.01;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Ensemble, IndependentOfThreadCount) {
  PulseSpec spec;
  PropagationConfig cfg;
  cfg.total_length_m = 2.0;
  cfg.dz_m = 0.02;
  cfg.snapshot_distances = {1.0, 2.0};
  cfg.seed = 99;
  const auto a = run_ensemble(spec, FiberParams{}, cfg, 12, 1);
  const auto b = run_ensemble(spec, FiberParams{}, cfg, 12, 8);
  for (std::size_t d = 0; d < a.distances.size(); ++d) {
    for (int i = 0; i < a.n_traj(); ++i) {
      const auto x = a.snapshots[d][i].samples(), y = b.snapshots[d][i].samples();
      ASSERT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
    }
  }
}

TEST(Ensemble, NoiseOffGivesIdenticalTrajectories) {
  PulseSpec spec;
  auto cfg = classical(1.0, 0.05);
  const auto ens = run_ensemble(spec, FiberParams{}, cfg, 5, 2);
  for (int i = 1; i < 5; ++i) {
    const auto x = ens.snapshots[0][0].samples(), y = ens.snapshots[0][i].samples();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
  }
}

TEST(Ensemble, RejectsSingleTrajectory) {
  EXPECT_THROW(run_ensemble(PulseSpec{}, FiberParams{}, classical(1.0, 0.1), 1), std::invalid_argument);
}

TEST(Ensemble, LinearMeanFieldFollowsClassicalSolution) {
  FiberParams f;
  f.gamma_per_w_km = 0.0;
  PulseSpec spec;
  PropagationConfig cfg;
  cfg.total_length_m = 5.0;
  cfg.dz_m = 5.0;
  cfg.snapshot_distances = {5.0};
  const int n = 400;
  const auto ens = run_ensemble(spec, f, cfg, n);
  const auto ref = propagate(sech_pulse(default_grid_for(spec), spec), f, classical(5.0, 5.0)).back();
  const double hw = ens.photon_energy_pj(), dt = ens.grid->dt();
  const double sigma = std::sqrt(hw / (2.0 * dt) / n);  // standard error of the mean per sample
  double worst = 0.0, excess = 0.0;
  for (int j = 0; j < ens.grid->n_points(); ++j) {
    Complex mean{};
    for (const auto& e : ens.snapshots[0]) mean += e.samples()[j];
    mean /= double(n);
    worst = std::max(worst, std::abs(mean - ref.samples()[j]) / sigma);
    for (const auto& e : ens.snapshots[0]) excess += std::norm(e.samples()[j] - mean);
  }
  EXPECT_LT(worst, 5.5);
  // Free evolution keeps half a photon per mode.
  const double photons_per_mode = excess / (n - 1) * dt / hw / ens.grid->n_points();
  EXPECT_NEAR(photons_per_mode, 0.5, 0.01);
}

TEST(Ensemble, RamanNoiseFlagPerturbsTrajectories) {
  PulseSpec spec;
  PropagationConfig cfg;
  cfg.total_length_m = 1.0;
  cfg.dz_m = 0.02;
  cfg.snapshot_distances = {1.0};
  const auto quiet = run_ensemble(spec, FiberParams{}, cfg, 2, 1);
  cfg.raman_noise = true;
  const auto noisy = run_ensemble(spec, FiberParams{}, cfg, 2, 1);
  const auto a = quiet.snapshots[0][0].samples(), b = noisy.snapshots[0][0].samples();
  double diff = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    ASSERT_TRUE(std::isfinite(b[j].real()) && std::isfinite(b[j].imag()));
    diff = std::max(diff, std::abs(a[j] - b[j]));
  }
  EXPECT_GT(diff, 0.0);
}

TEST(Stepping, LengthScales) {
  FiberParams f;
  PulseSpec spec;
  EXPECT_NEAR(dispersion_length(f, spec), spec.tau_ps() * spec.tau_ps() / 0.0105, 1e-12);
  EXPECT_NEAR(nonlinear_length(f, spec), 1.0 / (0.003 * spec.peak_power_w()), 1e-12);
  f.gamma_per_w_km = 0.0;
  EXPECT_TRUE(std::isinf(nonlinear_length(f, spec)));
  EXPECT_LE(auto_step(FiberParams{}, spec), 0.1);
}

TEST(Stepping, LinearRunConvergesImmediately) {
  FiberParams f;
  f.gamma_per_w_km = 0.0;
  PropagationConfig cfg;
  cfg.total_length_m = 10.0;
  cfg.dz_m = 10.0;
  cfg.snapshot_distances = {10.0};
  const auto rep = convergence_check(PulseSpec{}, f, cfg, 50);
  EXPECT_EQ(rep.halvings, 1);
  EXPECT_LT(rep.change_db, 1e-9);
}

TEST(Stepping, PathologicalStepIsRefined) {
  PropagationConfig cfg;
  cfg.total_length_m = 2.0;
  cfg.dz_m = 2.0;
  cfg.snapshot_distances = {2.0};
  const auto rep = convergence_check(PulseSpec{}, FiberParams{}, cfg, 100);
  EXPECT_GE(rep.halvings, 2);
  EXPECT_LT(rep.change_db, 0.1);
  EXPECT_LT(rep.dz_m, 2.0);
}
