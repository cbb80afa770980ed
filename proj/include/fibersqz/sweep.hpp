#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fibersqz/ensemble.hpp"
#include "fibersqz/parallel.hpp"
#include "fibersqz/soliton.hpp"
#include "fibersqz/squeezing.hpp"
#include "fibersqz/stepping.hpp"

namespace fibersqz {

inline constexpr const char* kCodeVersion = "fibersqz 0.1.0";

inline std::vector<double> linear_axis(double lo, double hi, int count) {
  if (count < 2) throw std::invalid_argument("axis needs at least 2 points");
  std::vector<double> v(count);
  for (int k = 0; k < count; ++k) v[k] = lo + (hi - lo) * k / (count - 1);
  v.back() = hi;
  return v;
}

inline std::vector<double> log_axis(double lo, double hi, int count) {
  if (count < 2) throw std::invalid_argument("axis needs at least 2 points");
  if (!(lo > 0.0 && hi > 0.0)) throw std::invalid_argument("log axis needs positive bounds");
  std::vector<double> v(count);
  for (int k = 0; k < count; ++k) v[k] = lo * std::pow(hi / lo, double(k) / (count - 1));
  v.back() = hi;
  return v;
}

/// "none", "fiber" or "fiber+X%" (X percent external loss on top of fiber loss).
inline LossBudget parse_loss_budget(const std::string& tag, const FiberParams& fiber) {
  if (tag == "none") return {"none", 0.0, 0.0, 1.0};
  if (tag == "fiber") return {"fiber", 0.0, fiber.intrinsic_loss_db_per_km, 1.0};
  const std::string prefix = "fiber+";
  if (tag.rfind(prefix, 0) == 0 && tag.size() > prefix.size() + 1 && tag.back() == '%') {
    const std::string number = tag.substr(prefix.size(), tag.size() - prefix.size() - 1);
    std::size_t used = 0;
    double pct = std::numeric_limits<double>::quiet_NaN();
    try {
      pct = std::stod(number, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == number.size() && pct >= 0.0 && pct < 100.0) {
      return {tag, 0.0, fiber.intrinsic_loss_db_per_km, 1.0 - pct / 100.0};
    }
  }
  throw std::invalid_argument("invalid loss budget '" + tag + "' (expected none, fiber or fiber+X%)");
}

struct SweepSpec {
  std::vector<double> durations_ps = linear_axis(0.11, 0.5, 14);
  std::vector<double> energies_pj = log_axis(22.5, 120.0, 14);
  std::vector<double> distances_m{0.6, 1.8, 3.6, 7.2, 12.0, 18.0, 24.0, 30.0};
  int n_traj = 1000;
  int baseline_traj = 0;  // 0: same as n_traj
  int pairing_rounds = 8;
  std::vector<std::string> budgets{"none", "fiber", "fiber+5%", "fiber+20%"};
  std::uint64_t master_seed = 1;
  FiberParams fiber;
  StepPolicy step;
  bool raman_noise = false;
  double temperature_k = 300.0;

  int baseline_count() const { return baseline_traj > 0 ? baseline_traj : n_traj; }

  void validate() const {
    auto axis = [](const std::vector<double>& v, const char* name, bool allow_zero) {
      if (v.size() < 2) throw std::invalid_argument(std::string(name) + " needs at least 2 points");
      for (std::size_t k = 0; k < v.size(); ++k) {
        if (!std::isfinite(v[k]) || (allow_zero ? v[k] < 0.0 : v[k] <= 0.0)) {
          throw std::invalid_argument(std::string(name) + " values must be positive");
        }
        if (k > 0 && !(v[k] > v[k - 1])) throw std::invalid_argument(std::string(name) + " must be strictly increasing");
      }
    };
    axis(durations_ps, "sweep.durations", false);
    axis(energies_pj, "sweep.energies", false);
    if (distances_m.empty()) throw std::invalid_argument("sweep.distances must not be empty");
    for (std::size_t k = 0; k < distances_m.size(); ++k) {
      if (!(distances_m[k] > 0.0) || (k > 0 && !(distances_m[k] > distances_m[k - 1]))) {
        throw std::invalid_argument("sweep.distances must be positive and strictly increasing");
      }
    }
    if (n_traj < 2) throw std::invalid_argument("sweep.n_traj must be at least 2");
    if (baseline_traj < 0 || baseline_traj == 1) throw std::invalid_argument("sweep.baseline_traj must be 0 or >= 2");
    if (pairing_rounds < 1) throw std::invalid_argument("sweep.pairing_rounds must be positive");
    if (budgets.empty()) throw std::invalid_argument("sweep.budgets must not be empty");
    for (const auto& b : budgets) parse_loss_budget(b, fiber);
    fiber.validate();
    step.validate();
  }
};

/// One dataset row. Values are NaN when status is not "ok".
struct SweepRecord {
  double T_ps = 0.0;
  double E_pJ = 0.0;
  double z_m = 0.0;
  std::string loss_tag;
  double squeezing_db = 0.0;
  double antisqueezing_db = 0.0;
  double theta_opt = 0.0;
  double N = 0.0;
  double K = 0.0;
  double stat_error_db = 0.0;
  double homodyne_db = 0.0;
  double P0_W = 0.0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
  friend bool operator==(const SweepRecord&, const SweepRecord&) = default;
};

struct SweepDataset {
  std::vector<SweepRecord> records;
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

  bool complete() const {
    return std::all_of(records.begin(), records.end(), [](const SweepRecord& r) { return r.ok(); });
  }
};

namespace detail {

inline std::uint64_t bits_of(double x) { return std::bit_cast<std::uint64_t>(x); }

inline double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

// Soliton number and K are annotations; they are NaN where undefined.
inline double soliton_number_or_nan(const FiberParams& fiber, double T, double E) {
  if (!(fiber.beta2_ps2_per_km < 0.0) || !(fiber.gamma_per_w_km > 0.0)) return nan_value();
  return soliton_number(fiber, T, E);
}

inline double raman_K_or_nan(const FiberParams& fiber, double T, double z) {
  const double tr = default_TR_fs(fiber);
  if (!(tr > 0.0) || !(z > 0.0)) return tr == 0.0 ? 0.0 : nan_value();
  return raman_K(fiber, T, z, tr);
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

}  // namespace detail

/// Seed of the (T, E) cell; depends on the values, not on axis positions, so
/// extending an axis leaves existing cells unchanged.
inline std::uint64_t cell_seed(std::uint64_t master_seed, double T_ps, double E_pj) {
  return derive_key(derive_key(master_seed, detail::bits_of(T_ps)), detail::bits_of(E_pj));
}

inline PropagationConfig cell_config(const SweepSpec& spec, const PulseSpec& pulse) {
  PropagationConfig cfg;
  cfg.total_length_m = spec.distances_m.back();
  cfg.snapshot_distances = spec.distances_m;
  cfg.quantum_noise = true;
  cfg.raman_noise = spec.raman_noise;
  cfg.temperature_k = spec.temperature_k;
  cfg.seed = cell_seed(spec.master_seed, pulse.fwhm_ps, pulse.energy_pj);
  cfg.dz_m = clamp_to_snapshots(auto_step(spec.fiber, pulse, spec.step), cfg);
  return cfg;
}

/// Identifies everything that determines a cell's records.
inline std::uint64_t cell_key(const SweepSpec& spec, double T_ps, double E_pj) {
  std::uint64_t h = cell_seed(spec.master_seed, T_ps, E_pj);
  auto mix = [&](double v) { h = derive_key(h, detail::bits_of(v)); };
  for (double z : spec.distances_m) mix(z);
  mix(spec.n_traj);
  mix(spec.baseline_count());
  mix(spec.pairing_rounds);
  const auto& f = spec.fiber;
  for (double v : {f.beta2_ps2_per_km, f.beta3_ps3_per_km, f.gamma_per_w_km, f.intrinsic_loss_db_per_km,
                   f.raman.fraction, f.raman.tau1_fs, f.raman.tau2_fs, f.raman.enabled ? 1.0 : 0.0,
                   spec.step.fraction, spec.step.max_dz_m, spec.raman_noise ? 1.0 : 0.0, spec.temperature_k}) {
    mix(v);
  }
  for (const auto& b : spec.budgets) {
    for (char c : b) h = derive_key(h, static_cast<unsigned char>(c));
    h = derive_key(h, 0x2c);
  }
  return h;
}

struct SweepCost {
  int cells = 0;
  long long records = 0;
  double trajectory_steps = 0.0;  // sum over cells of n_traj * steps
  double peak_memory_bytes = 0.0;
  double estimated_seconds = 0.0;
};

/// Rough cost model: one split step costs ~3 FFTs of n points.
inline SweepCost estimate_sweep(const SweepSpec& spec, int threads = 1) {
  spec.validate();
  SweepCost c;
  const int workers = resolve_threads(threads);
  double largest_cell = 0.0;
  for (double T : spec.durations_ps) {
    for (double E : spec.energies_pj) {
      PulseSpec pulse;
      pulse.fwhm_ps = T;
      pulse.energy_pj = E;
      const auto cfg = cell_config(spec, pulse);
      const double n = default_grid_for(pulse)->n_points();
      const double steps = std::ceil(cfg.total_length_m / cfg.dz_m) + spec.distances_m.size();
      c.trajectory_steps += steps * spec.n_traj;
      c.estimated_seconds += steps * spec.n_traj * 3.0 * 5.0 * n * std::log2(n) * 0.25e-9;
      const double bytes = 16.0 * n * spec.distances_m.size() * std::max(spec.n_traj, spec.baseline_count());
      largest_cell = std::max(largest_cell, bytes);
      ++c.cells;
    }
  }
  c.records = static_cast<long long>(c.cells) * spec.distances_m.size() * spec.budgets.size();
  c.peak_memory_bytes = largest_cell * std::min(workers, c.cells);
  c.estimated_seconds /= std::min(workers, c.cells);
  return c;
}

/// Records of one (T, E) cell: every distance times every budget, in spec order.
inline std::vector<SweepRecord> run_cell(const SweepSpec& spec, double T_ps, double E_pj, int threads = 1) {
  PulseSpec pulse;
  pulse.fwhm_ps = T_ps;
  pulse.energy_pj = E_pj;
  const auto cfg = cell_config(spec, pulse);
  const auto input = sech_pulse(default_grid_for(pulse), pulse);
  const auto baseline = shot_noise_baseline(input, spec.fiber, cfg, spec.baseline_count(), threads);
  const auto ens = run_ensemble(input, spec.fiber, cfg, spec.n_traj, threads);
  const auto pairing = pairing_seed_for(cfg.seed);

  std::vector<SweepRecord> out;
  for (double z : spec.distances_m) {
    const auto dp = dark_plane_squeezing(stokes_samples(ens, z, pairing, spec.pairing_rounds),
                                         baseline.for_estimator(Estimator::kDarkPlane, z));
    const auto hd = homodyne_squeezing(ens, z, baseline.for_estimator(Estimator::kHomodyne, z));
    for (const auto& tag : spec.budgets) {
      auto budget = parse_loss_budget(tag, spec.fiber);
      budget.fiber_length_m = z;
      const auto d = apply_losses(dp, budget);
      const auto h = apply_losses(hd, budget);
      SweepRecord r;
      r.T_ps = T_ps;
      r.E_pJ = E_pj;
      r.z_m = z;
      r.loss_tag = tag;
      r.squeezing_db = d.squeezing_db;
      r.antisqueezing_db = d.antisqueezing_db;
      r.theta_opt = d.theta_opt;
      r.N = detail::soliton_number_or_nan(spec.fiber, T_ps, E_pj);
      r.K = detail::raman_K_or_nan(spec.fiber, T_ps, z);
      r.stat_error_db = dp.stat_error_db();
      r.homodyne_db = h.squeezing_db;
      r.P0_W = pulse.peak_power_w();
      out.push_back(r);
    }
  }
  return out;
}

inline nlohmann::ordered_json record_to_json(const SweepRecord& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr); };
  nlohmann::ordered_json j;
  j["T_ps"] = num(r.T_ps);
  j["E_pJ"] = num(r.E_pJ);
  j["z_m"] = num(r.z_m);
  j["loss_tag"] = r.loss_tag;
  j["squeezing_db"] = num(r.squeezing_db);
  j["antisqueezing_db"] = num(r.antisqueezing_db);
  j["theta_opt_rad"] = num(r.theta_opt);
  j["N"] = num(r.N);
  j["K"] = num(r.K);
  j["stat_error_db"] = num(r.stat_error_db);
  j["homodyne_db"] = num(r.homodyne_db);
  j["P0_W"] = num(r.P0_W);
  j["status"] = r.status;
  return j;
}

inline SweepRecord record_from_json(const nlohmann::ordered_json& j) {
  auto num = [&](const char* k) {
    const auto& v = j.at(k);
    return v.is_null() ? detail::nan_value() : v.get<double>();
  };
  SweepRecord r;
  r.T_ps = num("T_ps");
  r.E_pJ = num("E_pJ");
  r.z_m = num("z_m");
  r.loss_tag = j.at("loss_tag").get<std::string>();
  r.squeezing_db = num("squeezing_db");
  r.antisqueezing_db = num("antisqueezing_db");
  r.theta_opt = num("theta_opt_rad");
  r.N = num("N");
  r.K = num("K");
  r.stat_error_db = num("stat_error_db");
  r.homodyne_db = num("homodyne_db");
  r.P0_W = num("P0_W");
  r.status = j.at("status").get<std::string>();
  return r;
}

inline nlohmann::ordered_json sweep_provenance(const SweepSpec& spec) {
  nlohmann::ordered_json p;
  p["code_version"] = kCodeVersion;
  p["master_seed"] = spec.master_seed;
  p["n_traj"] = spec.n_traj;
  p["baseline_traj"] = spec.baseline_count();
  p["pairing_rounds"] = spec.pairing_rounds;
  p["durations_ps"] = spec.durations_ps;
  p["energies_pJ"] = spec.energies_pj;
  p["distances_m"] = spec.distances_m;
  p["budgets"] = spec.budgets;
  const auto& f = spec.fiber;
  p["fiber"] = {{"beta2_ps2_per_km", f.beta2_ps2_per_km},
                {"beta3_ps3_per_km", f.beta3_ps3_per_km},
                {"gamma_per_W_km", f.gamma_per_w_km},
                {"loss_dB_per_km", f.intrinsic_loss_db_per_km},
                {"raman_enabled", f.raman.enabled},
                {"raman_fraction", f.raman.fraction},
                {"raman_tau1_fs", f.raman.tau1_fs},
                {"raman_tau2_fs", f.raman.tau2_fs},
                {"T_R_fs", default_TR_fs(f)}};
  p["step"] = {{"fraction", spec.step.fraction}, {"max_dz_m", spec.step.max_dz_m}};
  p["raman_noise"] = spec.raman_noise;
  p["temperature_K"] = spec.temperature_k;
  p["estimator"] = "dark_plane";
  p["calibration"] = "gamma=0 ensemble, mean over theta, disjoint seed stream";
  return p;
}

struct SweepOptions {
  int threads = 0;
  std::filesystem::path checkpoint_dir;  // empty: no checkpointing
  /// Called after each cell with (cells done, total cells, reused from checkpoint).
  std::function<void(int, int, bool)> progress;
};

namespace detail {

inline bool load_checkpoint(const std::filesystem::path& file, std::uint64_t key, std::vector<SweepRecord>& out) {
  std::ifstream in(file);
  if (!in) return false;
  try {
    const auto j = nlohmann::ordered_json::parse(in);
    if (j.at("key").get<std::string>() != hex64(key)) return false;
    out.clear();
    for (const auto& r : j.at("records")) out.push_back(record_from_json(r));
    return true;
  } catch (const std::exception&) {
    return false;  // torn or foreign file: recompute the cell
  }
}

inline void write_checkpoint(const std::filesystem::path& file, std::uint64_t key,
                             const std::vector<SweepRecord>& records) {
  nlohmann::ordered_json j;
  j["key"] = hex64(key);
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : records) j["records"].push_back(record_to_json(r));
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out << j.dump() << '\n';
    if (!out.flush()) throw std::runtime_error("cannot write checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

}  // namespace detail

/// Runs every (T, E) cell over a pool of opts.threads workers; each cell runs
/// its trajectories serially, so records do not depend on scheduling. Failed
/// cells are kept as status rows and are retried on the next run.
inline SweepDataset run_sweep(const SweepSpec& spec, const SweepOptions& opts = {}) {
  spec.validate();
  if (!opts.checkpoint_dir.empty()) std::filesystem::create_directories(opts.checkpoint_dir);
  const std::size_t nT = spec.durations_ps.size(), nE = spec.energies_pj.size();
  std::vector<std::vector<SweepRecord>> cells(nT * nE);
  std::atomic<int> done{0};
  std::mutex progress_mutex;

  parallel_for(cells.size(), opts.threads, [&](std::size_t c) {
    const double T = spec.durations_ps[c / nE], E = spec.energies_pj[c % nE];
    const auto key = cell_key(spec, T, E);
    std::filesystem::path file;
    bool reused = false;
    if (!opts.checkpoint_dir.empty()) {
      file = opts.checkpoint_dir / ("cell-" + detail::hex64(key) + ".json");
      reused = detail::load_checkpoint(file, key, cells[c]);
    }
    if (!reused) {
      try {
        cells[c] = run_cell(spec, T, E, 1);
        if (!file.empty()) detail::write_checkpoint(file, key, cells[c]);
      } catch (const std::exception& e) {
        cells[c].clear();
        for (double z : spec.distances_m) {
          for (const auto& tag : spec.budgets) {
            SweepRecord r;
            r.T_ps = T;
            r.E_pJ = E;
            r.z_m = z;
            r.loss_tag = tag;
            r.squeezing_db = r.antisqueezing_db = r.theta_opt = detail::nan_value();
            r.stat_error_db = r.homodyne_db = detail::nan_value();
            r.N = detail::soliton_number_or_nan(spec.fiber, T, E);
            r.K = detail::raman_K_or_nan(spec.fiber, T, z);
            r.P0_W = E / (2.0 * T / units::kSechFwhmFactor);
            r.status = std::string("failed: ") + e.what();
            cells[c].push_back(r);
          }
        }
      }
    }
    const int finished = ++done;
    if (opts.progress) {
      std::lock_guard lock(progress_mutex);
      opts.progress(finished, static_cast<int>(cells.size()), reused);
    }
  });

  SweepDataset ds;
  ds.provenance = sweep_provenance(spec);
  for (auto& c : cells) {
    for (auto& r : c) ds.records.push_back(std::move(r));
  }
  ds.provenance["complete"] = ds.complete();
  return ds;
}

// ---------------------------------------------------------------- optima

/// Vertex of the parabola through (x[k-1..k+1], y[k-1..k+1]); false at edges
/// or when the three points are not convex.
inline bool parabolic_vertex(const std::vector<double>& x, const std::vector<double>& y, std::size_t k,
                             double& x_opt, double& y_opt) {
  if (k == 0 || k + 1 >= x.size()) return false;
  const double x0 = x[k - 1], x1 = x[k], x2 = x[k + 1];
  const double y0 = y[k - 1], y1 = y[k], y2 = y[k + 1];
  const double d01 = (y1 - y0) / (x1 - x0), d12 = (y2 - y1) / (x2 - x1);
  const double a = (d12 - d01) / (x2 - x0);
  if (!(a > 0.0)) return false;
  const double b = d01 - a * (x0 + x1);
  x_opt = std::clamp(-b / (2.0 * a), x0, x2);
  y_opt = std::min(y1, y0 + (x_opt - x0) * (d01 + a * (x_opt - x1)));
  return true;
}

struct Optimum {
  double z_m = 0.0;
  double T_ps = 0.0;
  double E_pJ = 0.0;
  double squeezing_db = 0.0;
  double N = 0.0;
  double K = 0.0;
  double P0_W = 0.0;
  bool refined = false;
};

struct DistanceOptima {
  double z_m = 0.0;
  /// False when no cell beats the slice median by three standard errors.
  bool has_optimum = false;
  Optimum best;                   // grid argmin, refined along energy
  std::vector<Optimum> per_duration;  // optimal E(T) for each duration
  Optimum best_duration;          // energy-optimized curve refined along duration
};

struct OptimaCurves {
  std::string loss_tag;
  std::vector<DistanceOptima> distances;
  /// Best squeezing never gets worse with length (within 2 standard errors).
  bool monotone_non_increasing = true;
  std::vector<std::string> notes;
};

namespace detail {

struct Slice {
  std::vector<double> T, E;
  std::vector<std::vector<double>> s;   // [T][E] squeezing_db
  std::vector<std::vector<double>> err; // [T][E] stat_error_db
};

inline Slice make_slice(const std::vector<const SweepRecord*>& rows) {
  Slice sl;
  for (const auto* r : rows) {
    sl.T.push_back(r->T_ps);
    sl.E.push_back(r->E_pJ);
  }
  auto uniq = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(sl.T);
  uniq(sl.E);
  const double nan = nan_value();
  sl.s.assign(sl.T.size(), std::vector<double>(sl.E.size(), nan));
  sl.err = sl.s;
  std::vector<std::vector<int>> count(sl.T.size(), std::vector<int>(sl.E.size(), 0));
  for (const auto* r : rows) {
    const auto i = std::lower_bound(sl.T.begin(), sl.T.end(), r->T_ps) - sl.T.begin();
    const auto k = std::lower_bound(sl.E.begin(), sl.E.end(), r->E_pJ) - sl.E.begin();
    if (++count[i][k] > 1) throw std::invalid_argument("extract_optima: duplicate record for one cell");
    sl.s[i][k] = r->squeezing_db;
    sl.err[i][k] = r->stat_error_db;
  }
  for (std::size_t i = 0; i < sl.T.size(); ++i) {
    for (std::size_t k = 0; k < sl.E.size(); ++k) {
      if (count[i][k] == 0 || !std::isfinite(sl.s[i][k])) {
        std::ostringstream msg;
        msg << "extract_optima: incomplete slice (T = " << sl.T[i] << " ps, E = " << sl.E[k] << " pJ)";
        throw std::invalid_argument(msg.str());
      }
    }
  }
  return sl;
}

inline Optimum annotate(const FiberParams& fiber, double z, double T, double E, double s, bool refined) {
  Optimum o;
  o.z_m = z;
  o.T_ps = T;
  o.E_pJ = E;
  o.squeezing_db = s;
  o.N = soliton_number_or_nan(fiber, T, E);
  o.K = raman_K_or_nan(fiber, T, z);
  o.P0_W = E / (2.0 * T / units::kSechFwhmFactor);
  o.refined = refined;
  return o;
}

// Optimal energy at duration index i, refined in log E.
inline Optimum energy_optimum(const Slice& sl, const FiberParams& fiber, double z, std::size_t i) {
  const auto& row = sl.s[i];
  const auto k = static_cast<std::size_t>(std::min_element(row.begin(), row.end()) - row.begin());
  std::vector<double> x(sl.E.size());
  for (std::size_t m = 0; m < x.size(); ++m) x[m] = std::log(sl.E[m]);
  double xo = 0.0, yo = 0.0;
  if (parabolic_vertex(x, row, k, xo, yo)) return annotate(fiber, z, sl.T[i], std::exp(xo), yo, true);
  return annotate(fiber, z, sl.T[i], sl.E[k], row[k], false);
}

inline FiberParams fiber_from_provenance(const nlohmann::ordered_json& p) {
  FiberParams f;
  if (!p.contains("fiber")) return f;
  const auto& j = p.at("fiber");
  f.beta2_ps2_per_km = j.value("beta2_ps2_per_km", f.beta2_ps2_per_km);
  f.beta3_ps3_per_km = j.value("beta3_ps3_per_km", f.beta3_ps3_per_km);
  f.gamma_per_w_km = j.value("gamma_per_W_km", f.gamma_per_w_km);
  f.intrinsic_loss_db_per_km = j.value("loss_dB_per_km", f.intrinsic_loss_db_per_km);
  f.raman.enabled = j.value("raman_enabled", f.raman.enabled);
  f.raman.fraction = j.value("raman_fraction", f.raman.fraction);
  f.raman.tau1_fs = j.value("raman_tau1_fs", f.raman.tau1_fs);
  f.raman.tau2_fs = j.value("raman_tau2_fs", f.raman.tau2_fs);
  return f;
}

}  // namespace detail

/// Optima of every distance slice of `loss_tag`. The result depends only on
/// the set of records, not on their order.
inline OptimaCurves extract_optima(const SweepDataset& ds, const std::string& loss_tag = "none") {
  const auto fiber = detail::fiber_from_provenance(ds.provenance);
  std::vector<double> zs;
  for (const auto& r : ds.records) {
    if (r.loss_tag == loss_tag) zs.push_back(r.z_m);
  }
  std::sort(zs.begin(), zs.end());
  zs.erase(std::unique(zs.begin(), zs.end()), zs.end());
  if (zs.empty()) throw std::invalid_argument("extract_optima: no records with loss tag '" + loss_tag + "'");

  OptimaCurves out;
  out.loss_tag = loss_tag;
  for (double z : zs) {
    std::vector<const SweepRecord*> rows;
    for (const auto& r : ds.records) {
      if (r.loss_tag == loss_tag && r.z_m == z) rows.push_back(&r);
    }
    const auto sl = detail::make_slice(rows);
    DistanceOptima d;
    d.z_m = z;

    std::vector<double> all, errs;
    std::size_t bi = 0, bk = 0;
    for (std::size_t i = 0; i < sl.T.size(); ++i) {
      for (std::size_t k = 0; k < sl.E.size(); ++k) {
        all.push_back(sl.s[i][k]);
        errs.push_back(sl.err[i][k]);
        if (sl.s[i][k] < sl.s[bi][bk]) bi = i, bk = k;
      }
    }
    std::nth_element(all.begin(), all.begin() + all.size() / 2, all.end());
    const double median = all[all.size() / 2];
    std::nth_element(errs.begin(), errs.begin() + errs.size() / 2, errs.end());
    const double sigma = errs[errs.size() / 2];
    d.has_optimum = sl.s[bi][bk] < median - 3.0 * std::max(sigma, 1e-12);

    for (std::size_t i = 0; i < sl.T.size(); ++i) d.per_duration.push_back(detail::energy_optimum(sl, fiber, z, i));
    d.best = detail::energy_optimum(sl, fiber, z, bi);

    std::vector<double> curve;
    for (const auto& o : d.per_duration) curve.push_back(o.squeezing_db);
    const auto kt = static_cast<std::size_t>(std::min_element(curve.begin(), curve.end()) - curve.begin());
    double to = 0.0, so = 0.0;
    if (parabolic_vertex(sl.T, curve, kt, to, so)) {
      // Energy on the refined duration: interpolate log E*(T) between neighbours.
      const std::size_t lo = to < sl.T[kt] ? kt - 1 : kt;
      const double w = (to - sl.T[lo]) / (sl.T[lo + 1] - sl.T[lo]);
      const double e = std::exp((1.0 - w) * std::log(d.per_duration[lo].E_pJ) + w * std::log(d.per_duration[lo + 1].E_pJ));
      d.best_duration = detail::annotate(fiber, z, to, e, so, true);
    } else {
      d.best_duration = d.per_duration[kt];
    }
    out.distances.push_back(d);
  }

  for (std::size_t k = 1; k < out.distances.size(); ++k) {
    const auto& a = out.distances[k - 1];
    const auto& b = out.distances[k];
    std::vector<double> e;
    for (const auto& r : ds.records) {
      if (r.loss_tag == loss_tag && (r.z_m == a.z_m || r.z_m == b.z_m)) e.push_back(r.stat_error_db);
    }
    std::sort(e.begin(), e.end());
    const double tol = 2.0 * e[e.size() / 2];
    if (b.best.squeezing_db > a.best.squeezing_db + tol) {
      out.monotone_non_increasing = false;
      std::ostringstream msg;
      msg << "max squeezing worsens from " << a.best.squeezing_db << " dB at " << a.z_m << " m to "
          << b.best.squeezing_db << " dB at " << b.z_m << " m";
      out.notes.push_back(msg.str());
    }
  }
  return out;
}

/// Re-applies each budget to the lossless records and extracts optima.
inline std::vector<OptimaCurves> loss_scan(const SweepDataset& ds, const std::vector<std::string>& budgets) {
  const auto fiber = detail::fiber_from_provenance(ds.provenance);
  std::vector<OptimaCurves> out;
  for (const auto& tag : budgets) {
    const auto proto = parse_loss_budget(tag, fiber);
    SweepDataset lossy;
    lossy.provenance = ds.provenance;
    for (const auto& r : ds.records) {
      if (r.loss_tag != "none") continue;
      SweepRecord q = r;
      q.loss_tag = tag;
      auto budget = proto;
      budget.fiber_length_m = r.z_m;
      if (r.ok() && budget.total_efficiency() < 1.0) {
        SqueezingResult s;
        s.v_min = from_db(r.squeezing_db);
        s.v_max = from_db(r.antisqueezing_db);
        const auto l = apply_losses(s, budget);
        q.squeezing_db = l.squeezing_db;
        q.antisqueezing_db = l.antisqueezing_db;
        if (std::isfinite(r.homodyne_db)) {
          s.v_min = from_db(r.homodyne_db);
          q.homodyne_db = apply_losses(s, budget).squeezing_db;
        }
      }
      lossy.records.push_back(q);
    }
    if (lossy.records.empty()) throw std::invalid_argument("loss_scan: dataset has no lossless records");
    out.push_back(extract_optima(lossy, tag));
  }
  return out;
}

}  // namespace fibersqz
