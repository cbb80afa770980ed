// fibersqz: command-line front end.
//
// Exit status: 0 success, 2 invalid configuration or arguments, 3 runtime failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fibersqz/config.hpp"
#include "fibersqz/dataset_io.hpp"
#include "fibersqz/ensemble.hpp"
#include "fibersqz/snapshot_io.hpp"
#include "fibersqz/soliton.hpp"
#include "fibersqz/squeezing.hpp"
#include "fibersqz/sweep.hpp"

namespace fs = std::filesystem;
using namespace fibersqz;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out_dir = "out";
  std::string format = "csv";
  bool dry_run = false;
  std::vector<std::string> settings;  // section.key=value
};

// Small column table written as CSV or as a JSON array of objects.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;  // numbers pre-formatted
  std::vector<bool> numeric;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }

  std::string csv() const {
    std::string s;
    for (std::size_t c = 0; c < columns.size(); ++c) s += (c ? "," : "") + columns[c];
    s += '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) s += (c ? "," : "") + detail::csv_text(r[c]);
      s += '\n';
    }
    return s;
  }

  nlohmann::ordered_json json() const {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json o;
      for (std::size_t c = 0; c < columns.size(); ++c) {
        if (numeric[c]) {
          const double v = detail::parse_double(r[c], 0);
          o[columns[c]] = std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
        } else {
          o[columns[c]] = r[c];
        }
      }
      arr.push_back(o);
    }
    return arr;
  }

  void print(std::ostream& os) const {
    std::vector<std::size_t> width(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) width[c] = columns[c].size();
    auto shown = [&](std::size_t c, const std::string& v) {
      if (!numeric[c]) return v;
      const double x = detail::parse_double(v, 0);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6g", x);
      return std::string(buf);
    };
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], shown(c, r[c]).size());
    }
    for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "  " : "") << std::setw(int(width[c])) << columns[c];
    os << '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "  " : "") << std::setw(int(width[c])) << shown(c, r[c]);
      os << '\n';
    }
  }
};

std::string num(double v) { return detail::format_double(v); }

void write_text(const fs::path& path, const std::string& text) {
  auto out = detail::open_for_write(path);
  out << text;
  if (!out.flush()) throw std::runtime_error("cannot write " + path.string());
}

// Writes the table plus run metadata as <stem>.csv (+ .meta.json) or <stem>.json.
void write_table(const Globals& g, const std::string& stem, const Table& t, const nlohmann::ordered_json& meta) {
  const fs::path dir(g.out_dir);
  if (parse_format(g.format) == Format::kCsv) {
    write_text(dir / (stem + ".csv"), t.csv());
    write_text(dir / (stem + ".csv.meta.json"), meta.dump(1) + "\n");
    std::cout << "wrote " << (dir / (stem + ".csv")).string() << '\n';
  } else {
    nlohmann::ordered_json j;
    j["meta"] = meta;
    j["rows"] = t.json();
    write_text(dir / (stem + ".json"), j.dump(1) + "\n");
    std::cout << "wrote " << (dir / (stem + ".json")).string() << '\n';
  }
}

RunConfig resolve_config(const Globals& g) {
  RunConfig c;
  if (!g.config_path.empty()) c = load_config(g.config_path, c);
  for (const auto& s : g.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(s, "--set expects section.key=value");
    apply_setting(c, detail::trim(s.substr(0, eq)), s.substr(eq + 1));
  }
  if (g.seed) c.seed = *g.seed;
  if (g.threads) c.threads = *g.threads;
  try {
    parse_format(g.format);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("--format", e.what());
  }
  return c;
}

nlohmann::ordered_json run_meta(const RunConfig& c, const char* command) {
  nlohmann::ordered_json m;
  m["command"] = command;
  m["code_version"] = kCodeVersion;
  m["seed"] = c.seed;
  m["config"] = config_to_ini(c);
  return m;
}

// ------------------------------------------------------------- propagate

struct PropagateFlags {
  bool classical = false;
  std::string raman;  // "", "on", "off"
  int n_traj = 1;
};

int cmd_propagate(const Globals& g, const PropagateFlags& f, RunConfig c) {
  if (f.classical) c.propagation.quantum_noise = false;
  if (!f.raman.empty()) apply_setting(c, "raman.enabled", f.raman);
  if (f.n_traj < 1) throw ConfigError("--n-traj", "must be at least 1");
  validate_config(c);
  if (g.dry_run) {
    std::cout << config_to_ini(c);
    return 0;
  }
  std::cout << "# seed = " << c.seed << '\n';
  auto cfg = c.resolved_propagation();
  auto snapshots = cfg.snapshot_distances;
  if (snapshots.front() != 0.0) snapshots.insert(snapshots.begin(), 0.0);
  cfg.snapshot_distances = snapshots;
  const auto input = sech_pulse(c.grid(), c.pulse, c.wavelength_um);

  std::vector<std::vector<ComplexEnvelope>> fields;
  if (f.n_traj == 1) {
    const auto out = propagate(input, c.fiber, cfg);
    for (const auto& e : out) fields.push_back({e});
  } else {
    auto ens = run_ensemble(input, c.fiber, cfg, f.n_traj, c.threads);
    fields = std::move(ens.snapshots);
  }

  Table t;
  t.columns = {"z_m", "energy_pJ", "peak_power_W", "fwhm_ps", "centroid_rad_per_ps", "spectral_fwhm_rad_per_ps",
               "seed"};
  t.numeric = {true, true, true, true, true, true, false};
  double centroid0 = 0.0;
  for (std::size_t d = 0; d < snapshots.size(); ++d) {
    PulseMetrics m{};
    for (const auto& env : fields[d]) {
      const auto x = pulse_metrics(env);
      m.energy_pj += x.energy_pj;
      m.peak_power_w += x.peak_power_w;
      m.fwhm_ps += x.fwhm_ps;
      m.spectral_centroid += x.spectral_centroid;
      m.spectral_fwhm += x.spectral_fwhm;
    }
    const double n = static_cast<double>(fields[d].size());
    if (d == 0) centroid0 = m.spectral_centroid / n;
    t.add({num(snapshots[d]), num(m.energy_pj / n), num(m.peak_power_w / n), num(m.fwhm_ps / n),
           num(m.spectral_centroid / n), num(m.spectral_fwhm / n), std::to_string(c.seed)});
  }
  t.print(std::cout);
  const double zl = snapshots.back();
  const double rate = (detail::parse_double(t.rows.back()[4], 0) - centroid0) / zl;
  const double p0 = detail::parse_double(t.rows.front()[2], 0);
  double worst = 0.0;
  for (const auto& r : t.rows) worst = std::max(worst, std::abs(detail::parse_double(r[2], 0) / p0 - 1.0));
  std::cout << "centroid drift rate: " << rate << " rad/ps/m (negative: red shift)\n";
  std::cout << "max peak-power deviation: " << 100.0 * worst << " %\n";

  auto meta = run_meta(c, "propagate");
  meta["classical"] = !cfg.quantum_noise;
  meta["n_traj"] = f.n_traj;
  meta["centroid_drift_rate_rad_per_ps_per_m"] = rate;
  meta["max_peak_power_deviation"] = worst;
  write_table(g, "propagate_metrics", t, meta);
  const fs::path dump = fs::path(g.out_dir) / "snapshots.bin";
  write_snapshots(dump, snapshots, fields);
  std::cout << "wrote " << dump.string() << '\n';
  return 0;
}

// --------------------------------------------------------------- squeeze

int cmd_squeeze(const Globals& g, RunConfig c) {
  validate_config(c);
  if (g.dry_run) {
    std::cout << config_to_ini(c);
    return 0;
  }
  std::cout << "# seed = " << c.seed << '\n';
  const auto cfg = c.resolved_propagation();
  const auto input = sech_pulse(c.grid(), c.pulse, c.wavelength_um);
  const int n = c.detection.n_traj;
  const int nb = c.detection.baseline_traj > 0 ? c.detection.baseline_traj : n;
  const auto t0 = std::chrono::steady_clock::now();
  const auto baseline = shot_noise_baseline(input, c.fiber, cfg, nb, c.threads);
  const auto ens = run_ensemble(input, c.fiber, cfg, n, c.threads);
  const auto pairing = pairing_seed_for(cfg.seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Table t;
  t.columns = {"z_m",           "loss_tag",    "dark_plane_db", "antisqueezing_db", "homodyne_db",
               "theta_opt_rad", "stat_error_db", "v_min",       "v_max",            "baseline_dark_plane",
               "baseline_homodyne", "n_traj",  "seed"};
  t.numeric = {true, false, true, true, true, true, true, true, true, true, true, true, false};
  for (double z : cfg.snapshot_distances) {
    const auto dp = dark_plane_squeezing(stokes_samples(ens, z, pairing, c.detection.pairing_rounds),
                                         baseline.for_estimator(Estimator::kDarkPlane, z));
    const auto hd = homodyne_squeezing(ens, z, baseline.for_estimator(Estimator::kHomodyne, z));
    for (const auto& tag : c.detection.budgets) {
      auto b = parse_loss_budget(tag, c.fiber);
      b.fiber_length_m = z;
      const auto d = apply_losses(dp, b);
      const auto h = apply_losses(hd, b);
      t.add({num(z), tag, num(d.squeezing_db), num(d.antisqueezing_db), num(h.squeezing_db), num(d.theta_opt),
             num(dp.stat_error_db()), num(d.v_min), num(d.v_max), num(dp.baseline), num(hd.baseline),
             std::to_string(n), std::to_string(c.seed)});
    }
  }
  t.print(std::cout);
  std::cout << "ensemble time: " << secs << " s, dz = " << cfg.dz_m << " m\n";
  auto meta = run_meta(c, "squeeze");
  meta["n_traj"] = n;
  meta["baseline_traj"] = nb;
  meta["dz_m"] = cfg.dz_m;
  write_table(g, "squeeze", t, meta);
  return 0;
}

// ----------------------------------------------------------------- sweep

int cmd_sweep(const Globals& g, RunConfig c, const std::string& checkpoint, bool no_checkpoint) {
  validate_config(c);
  const auto spec = c.resolved_sweep();
  const auto cost = estimate_sweep(spec, c.threads);
  std::cout << "# seed = " << c.seed << '\n'
            << "sweep: " << cost.cells << " cells, " << cost.records << " records, ~"
            << static_cast<long long>(cost.estimated_seconds) << " s, ~" << cost.peak_memory_bytes / 1e6
            << " MB peak\n";
  if (g.dry_run) {
    std::cout << config_to_ini(c);
    return 0;
  }
  SweepOptions opts;
  opts.threads = c.threads;
  if (!no_checkpoint) opts.checkpoint_dir = checkpoint.empty() ? fs::path(g.out_dir) / "checkpoints" : fs::path(checkpoint);
  const auto t0 = std::chrono::steady_clock::now();
  opts.progress = [&](int done, int total, bool reused) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "cell " << done << "/" << total << (reused ? " (checkpoint)" : "") << "  " << s << " s\n";
  };
  const auto ds = run_sweep(spec, opts);
  const auto fmt = parse_format(g.format);
  const fs::path path = fs::path(g.out_dir) / (fmt == Format::kCsv ? "sweep.csv" : "sweep.json");
  export_dataset(ds, path, fmt);
  std::cout << "wrote " << path.string() << (ds.complete() ? "" : " (incomplete: some cells failed)") << '\n';
  return ds.complete() ? 0 : kExitRuntime;
}

// ---------------------------------------------------------------- optima

int cmd_optima(const Globals& g, const std::string& dataset, std::vector<std::string> budgets) {
  if (g.dry_run) {
    std::cout << "optima: dataset = " << dataset << '\n';
    return 0;
  }
  if (!fs::exists(dataset)) throw ConfigError("dataset", "missing dataset " + dataset);
  const auto ds = load_dataset(dataset);
  if (ds.provenance.contains("master_seed")) std::cout << "# seed = " << ds.provenance["master_seed"] << '\n';
  std::vector<OptimaCurves> curves;
  if (budgets.empty()) {
    std::vector<std::string> tags;
    for (const auto& r : ds.records) {
      if (std::find(tags.begin(), tags.end(), r.loss_tag) == tags.end()) tags.push_back(r.loss_tag);
    }
    for (const auto& tag : tags) curves.push_back(extract_optima(ds, tag));
  } else {
    curves = loss_scan(ds, budgets);
  }
  for (const auto& c : curves) {
    std::cout << "[" << c.loss_tag << "]" << (c.monotone_non_increasing ? "" : " max squeezing not monotone in z")
              << '\n';
    for (const auto& d : c.distances) {
      if (!d.has_optimum) {
        std::cout << "  z = " << d.z_m << " m: flat surface, no interior optimum (min " << d.best.squeezing_db
                  << " dB)\n";
        continue;
      }
      std::cout << "  z = " << d.z_m << " m: best " << d.best.squeezing_db << " dB at T = " << d.best.T_ps
                << " ps, E = " << d.best.E_pJ << " pJ, N = " << d.best.N
                << (d.best.refined ? " (refined)" : "") << "; energy-optimized best T = " << d.best_duration.T_ps
                << " ps, K = " << d.best_duration.K << '\n';
    }
    for (const auto& n : c.notes) std::cout << "  note: " << n << '\n';
  }
  const auto fmt = parse_format(g.format);
  const fs::path path = fs::path(g.out_dir) / (fmt == Format::kCsv ? "optima.csv" : "optima.json");
  write_text(path, fmt == Format::kCsv ? optima_to_csv(curves) : optima_to_json(curves, ds.provenance));
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

// ------------------------------------------------------------- analytics

struct AnalyticsArgs {
  double T = 0.0, E = 0.0, z = 0.0, tau = 0.0, P0 = 0.0, K = kDefaultKStar;
  std::optional<double> TR;
  std::vector<double> Ts;
};

int cmd_analytics(const Globals& g, const RunConfig& c, const std::string& query, const AnalyticsArgs& a) {
  const auto& fiber = c.fiber;
  const double tr = a.TR ? *a.TR : default_TR_fs(fiber);
  Table t;
  auto need = [](double v, const char* flag) {
    if (!(v > 0.0)) throw ConfigError(flag, "required and must be positive");
  };
  if (query == "soliton-energy") {
    need(a.T, "--T");
    t.columns = {"T_ps", "E_sol_pJ"};
    t.add({num(a.T), num(soliton_energy(fiber, a.T))});
  } else if (query == "soliton-number") {
    need(a.T, "--T");
    need(a.E, "--E");
    t.columns = {"T_ps", "E_pJ", "N"};
    t.add({num(a.T), num(a.E), num(soliton_number(fiber, a.T, a.E))});
  } else if (query == "K") {
    need(a.T, "--T");
    need(a.z, "--z");
    t.columns = {"T_ps", "z_m", "T_R_fs", "K"};
    t.add({num(a.T), num(a.z), num(tr), num(raman_K(fiber, a.T, a.z, tr))});
  } else if (query == "ssfs") {
    need(a.tau, "--tau");
    t.columns = {"tau_ps", "T_R_fs", "rate_rad_per_ps_per_m"};
    t.add({num(a.tau), num(tr), num(ssfs_rate(fiber, a.tau, tr))});
  } else if (query == "optimal-duration") {
    need(a.z, "--z");
    t.columns = {"z_m", "K_star", "T_R_fs", "T_ps"};
    t.add({num(a.z), num(a.K), num(tr), num(optimal_duration(fiber, a.z, a.K, tr))});
  } else if (query == "peak-power-curve") {
    if (!(a.P0 >= 0.0)) throw ConfigError("--P0", "must be non-negative");
    if (a.Ts.empty()) throw ConfigError("--T-list", "required");
    t.columns = {"T_ps", "E_pJ", "P0_W"};
    for (const auto& p : constant_peak_power_curve(a.P0, a.Ts)) t.add({num(p.fwhm_ps), num(p.energy_pj), num(a.P0)});
  } else {
    throw ConfigError("analytics", "unknown query '" + query + "'");
  }
  t.numeric.assign(t.columns.size(), true);
  t.print(std::cout);
  if (!g.dry_run && parse_format(g.format) == Format::kJson) std::cout << t.json().dump(1) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Truncated-Wigner simulation of polarization squeezing in fibers"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "INI configuration file");
  app.add_option("--seed", g.seed, "master seed (overrides run.seed)");
  app.add_option("--threads", g.threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  app.add_option("--out", g.out_dir, "output directory")->capture_default_str();
  app.add_option("--format", g.format, "output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  app.add_flag("--dry-run", g.dry_run, "print the resolved configuration and exit");
  app.add_option("--set", g.settings, "override a setting, section.key=value (repeatable)");

  auto* prop = app.add_subcommand("propagate", "single trajectory (or small ensemble) with pulse metrics");
  PropagateFlags pf;
  prop->add_flag("--classical", pf.classical, "disable vacuum noise");
  prop->add_option("--raman", pf.raman, "override raman.enabled")->check(CLI::IsMember({"on", "off"}));
  prop->add_option("--n-traj", pf.n_traj, "trajectories to run and dump")->capture_default_str();

  auto* sq = app.add_subcommand("squeeze", "ensemble squeezing per snapshot distance and loss budget");
  std::optional<int> sq_n;
  sq->add_option("--n-traj", sq_n, "trajectories (overrides detection.n_traj)");

  auto* sw = app.add_subcommand("sweep", "squeezing over durations x energies x distances");
  std::string checkpoint;
  bool no_checkpoint = false;
  std::optional<int> sw_n;
  sw->add_option("--checkpoint", checkpoint, "checkpoint directory (default OUT/checkpoints)");
  sw->add_flag("--no-checkpoint", no_checkpoint, "do not read or write checkpoints");
  sw->add_option("--n-traj", sw_n, "trajectories per cell (overrides sweep.n_traj)");

  auto* op = app.add_subcommand("optima", "optima and loss curves from a sweep dataset");
  std::string dataset;
  std::vector<std::string> budgets;
  op->add_option("dataset", dataset, "sweep dataset (.csv or .json)")->required();
  op->add_option("--budgets", budgets, "re-apply these loss budgets to the lossless records")->delimiter(',');

  auto* an = app.add_subcommand("analytics", "closed-form soliton and Raman relations");
  std::string query;
  AnalyticsArgs aa;
  an->add_option("query", query, "soliton-energy | soliton-number | K | ssfs | optimal-duration | peak-power-curve")
      ->required();
  an->add_option("--T", aa.T, "FWHM duration (ps)");
  an->add_option("--E", aa.E, "pulse energy (pJ)");
  an->add_option("--z", aa.z, "fiber length (m)");
  an->add_option("--tau", aa.tau, "sech width tau (ps)");
  an->add_option("--TR", aa.TR, "Raman time T_R (fs); default from the configured response");
  an->add_option("--K", aa.K, "target K for optimal-duration")->capture_default_str();
  an->add_option("--P0", aa.P0, "peak power (W)");
  an->add_option("--T-list", aa.Ts, "durations for peak-power-curve (ps)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    auto c = resolve_config(g);
    if (*prop) return cmd_propagate(g, pf, c);
    if (*sq) {
      if (sq_n) apply_setting(c, "detection.n_traj", std::to_string(*sq_n));
      return cmd_squeeze(g, c);
    }
    if (*sw) {
      if (sw_n) apply_setting(c, "sweep.n_traj", std::to_string(*sw_n));
      return cmd_sweep(g, c, checkpoint, no_checkpoint);
    }
    if (*op) return cmd_optima(g, dataset, budgets);
    validate_config(c);
    try {
      return cmd_analytics(g, c, query, aa);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("analytics " + query, e.what());
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
