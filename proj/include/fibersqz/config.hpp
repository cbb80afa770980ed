#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "fibersqz/dataset_io.hpp"
#include "fibersqz/fiber.hpp"
#include "fibersqz/grid.hpp"
#include "fibersqz/propagation.hpp"
#include "fibersqz/stepping.hpp"
#include "fibersqz/sweep.hpp"

// Run configuration: an INI file with fixed units per key. Values carry no
// unit suffix; "0.2ps" is rejected rather than converted.

namespace fibersqz {

/// Invalid configuration; `field` is the dotted path of the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct DetectionConfig {
  int n_traj = 1000;
  int baseline_traj = 0;  // 0: same as n_traj
  int pairing_rounds = 8;
  std::vector<std::string> budgets{"none", "fiber", "fiber+5%", "fiber+20%"};
};

struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 0;
  FiberParams fiber;
  PulseSpec pulse;
  double wavelength_um = kDefaultWavelengthUm;
  int grid_points = 0;      // 0: chosen from the pulse
  double grid_window_ps = 0.0;
  PropagationConfig propagation;
  bool auto_dz = true;
  StepPolicy step;
  DetectionConfig detection;
  SweepSpec sweep;

  RunConfig() {
    propagation.snapshot_distances = {0.6, 7.5, 15.0, 30.0};
    sweep.n_traj = detection.n_traj;
  }

  GridPtr grid() const {
    if (grid_points == 0 && grid_window_ps == 0.0) return default_grid_for(pulse);
    const auto auto_grid = default_grid_for(pulse);
    return make_grid(grid_points ? grid_points : auto_grid->n_points(),
                     grid_window_ps > 0.0 ? grid_window_ps : auto_grid->window());
  }

  /// Propagation settings with the seed applied and dz resolved.
  PropagationConfig resolved_propagation() const {
    PropagationConfig p = propagation;
    p.seed = seed;
    if (auto_dz) p.dz_m = clamp_to_snapshots(auto_step(fiber, pulse, step), p);
    return p;
  }

  SweepSpec resolved_sweep() const {
    SweepSpec s = sweep;
    s.fiber = fiber;
    s.step = step;
    s.master_seed = seed;
    s.pairing_rounds = detection.pairing_rounds;
    s.budgets = detection.budgets;
    s.raman_noise = propagation.raman_noise;
    s.temperature_k = propagation.temperature_k;
    return s;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline double parse_number(const std::string& path, const std::string& raw, const char* unit) {
  const std::string s = trim(raw);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{}) throw ConfigError(path, "expected a number, got '" + raw + "'");
  if (res.ptr != s.data() + s.size()) {
    throw ConfigError(path, "unexpected text '" + std::string(res.ptr) + "' after the number; units are fixed (" +
                                unit + "), write a plain number");
  }
  if (!std::isfinite(v)) throw ConfigError(path, "value must be finite");
  return v;
}

inline long long parse_integer(const std::string& path, const std::string& raw) {
  const std::string s = trim(raw);
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError(path, "expected an integer, got '" + raw + "'");
  }
  return v;
}

inline std::uint64_t parse_u64(const std::string& path, const std::string& raw) {
  const std::string s = trim(raw);
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError(path, "expected an unsigned 64-bit integer, got '" + raw + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& path, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "off" || s == "no" || s == "0") return false;
  throw ConfigError(path, "expected true/false, got '" + raw + "'");
}

inline std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// "a, b, c" or "lin:lo:hi:count" / "log:lo:hi:count".
inline std::vector<double> parse_axis(const std::string& path, const std::string& raw, const char* unit) {
  const std::string s = trim(raw);
  if (s.rfind("lin:", 0) == 0 || s.rfind("log:", 0) == 0) {
    std::vector<std::string> parts;
    std::stringstream ss(s.substr(4));
    std::string p;
    while (std::getline(ss, p, ':')) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError(path, "range must be lin:lo:hi:count or log:lo:hi:count");
    const double lo = parse_number(path, parts[0], unit), hi = parse_number(path, parts[1], unit);
    const auto count = parse_integer(path, parts[2]);
    if (count < 2 || count > 10000) throw ConfigError(path, "range count must lie in [2, 10000]");
    if (!(hi > lo)) throw ConfigError(path, "range upper bound must exceed the lower bound");
    try {
      return s[1] == 'i' ? linear_axis(lo, hi, int(count)) : log_axis(lo, hi, int(count));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path, e.what());
    }
  }
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(parse_number(path, item, unit));
  if (out.empty()) throw ConfigError(path, "list must not be empty");
  return out;
}

inline std::string fmt(double v) { return format_double(v); }

inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + fmt(v[k]);
  return s;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + v[k];
  return s;
}

}  // namespace detail

/// Applies one "section.key" = value assignment. Throws ConfigError for
/// unknown keys and malformed values; range checks happen in validate_config.
inline void apply_setting(RunConfig& c, const std::string& path, const std::string& value) {
  using namespace detail;
  auto num = [&](const char* unit) { return parse_number(path, value, unit); };
  auto integer = [&](long long lo, long long hi) {
    const auto v = parse_integer(path, value);
    if (v < lo || v > hi) {
      throw ConfigError(path, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return static_cast<int>(v);
  };
  auto flag = [&] { return parse_bool(path, value); };

  static const std::map<std::string, int> keys = [] {
    std::map<std::string, int> m;
    int k = 0;
    for (const char* p : {"run.seed", "run.threads", "fiber.beta2", "fiber.beta3", "fiber.gamma", "fiber.loss",
                          "raman.enabled", "raman.fraction", "raman.tau1", "raman.tau2", "pulse.energy",
                          "pulse.fwhm", "pulse.chirp", "pulse.wavelength", "grid.points", "grid.window",
                          "propagation.length", "propagation.dz", "propagation.snapshots",
                          "propagation.quantum_noise", "propagation.raman_noise", "propagation.distributed_loss",
                          "propagation.temperature", "propagation.step_fraction", "propagation.max_dz",
                          "detection.n_traj", "detection.baseline_traj", "detection.pairing_rounds",
                          "detection.budgets", "sweep.durations", "sweep.energies", "sweep.distances",
                          "sweep.n_traj", "sweep.baseline_traj"}) {
      m[p] = k++;
    }
    return m;
  }();
  const auto it = keys.find(path);
  if (it == keys.end()) throw ConfigError(path, "unknown setting");
  switch (it->second) {
    case 0: c.seed = parse_u64(path, value); break;
    case 1: c.threads = integer(0, 1024); break;
    case 2: c.fiber.beta2_ps2_per_km = num("ps^2/km"); break;
    case 3: c.fiber.beta3_ps3_per_km = num("ps^3/km"); break;
    case 4: c.fiber.gamma_per_w_km = num("1/(W km)"); break;
    case 5: c.fiber.intrinsic_loss_db_per_km = num("dB/km"); break;
    case 6: c.fiber.raman.enabled = flag(); break;
    case 7: c.fiber.raman.fraction = num("dimensionless"); break;
    case 8: c.fiber.raman.tau1_fs = num("fs"); break;
    case 9: c.fiber.raman.tau2_fs = num("fs"); break;
    case 10: c.pulse.energy_pj = num("pJ"); break;
    case 11: c.pulse.fwhm_ps = num("ps"); break;
    case 12: c.pulse.chirp = num("dimensionless"); break;
    case 13: c.wavelength_um = num("um"); break;
    case 14: c.grid_points = integer(0, 1 << 20); break;
    case 15: c.grid_window_ps = num("ps"); break;
    case 16: c.propagation.total_length_m = num("m"); break;
    case 17:
      if (trim(value) == "auto") {
        c.auto_dz = true;
      } else {
        c.auto_dz = false;
        c.propagation.dz_m = num("m");
      }
      break;
    case 18: c.propagation.snapshot_distances = parse_axis(path, value, "m"); break;
    case 19: c.propagation.quantum_noise = flag(); break;
    case 20: c.propagation.raman_noise = flag(); break;
    case 21: c.propagation.distributed_loss = flag(); break;
    case 22: c.propagation.temperature_k = num("K"); break;
    case 23: c.step.fraction = num("dimensionless"); break;
    case 24: c.step.max_dz_m = num("m"); break;
    case 25: c.detection.n_traj = integer(2, 100000000); break;
    case 26: c.detection.baseline_traj = integer(0, 100000000); break;
    case 27: c.detection.pairing_rounds = integer(1, 1000); break;
    case 28: c.detection.budgets = split_list(value); break;
    case 29: c.sweep.durations_ps = parse_axis(path, value, "ps"); break;
    case 30: c.sweep.energies_pj = parse_axis(path, value, "pJ"); break;
    case 31: c.sweep.distances_m = parse_axis(path, value, "m"); break;
    case 32: c.sweep.n_traj = integer(2, 100000000); break;
    case 33: c.sweep.baseline_traj = integer(0, 100000000); break;
  }
}

/// Range checks with field-path diagnostics; runs before any computation.
inline void validate_config(const RunConfig& c) {
  auto positive = [](double v, const char* path) {
    if (!(v > 0.0)) throw ConfigError(path, "must be positive");
  };
  const auto& f = c.fiber;
  if (!(f.gamma_per_w_km >= 0.0)) throw ConfigError("fiber.gamma", "must be non-negative");
  if (!(f.intrinsic_loss_db_per_km >= 0.0)) throw ConfigError("fiber.loss", "must be non-negative");
  if (!(f.raman.fraction >= 0.0 && f.raman.fraction < 1.0)) throw ConfigError("raman.fraction", "must lie in [0, 1)");
  positive(f.raman.tau1_fs, "raman.tau1");
  positive(f.raman.tau2_fs, "raman.tau2");
  positive(c.pulse.energy_pj, "pulse.energy");
  positive(c.pulse.fwhm_ps, "pulse.fwhm");
  positive(c.wavelength_um, "pulse.wavelength");
  if (c.grid_points != 0 && (c.grid_points < kMinGridPoints || (c.grid_points & (c.grid_points - 1)) != 0)) {
    throw ConfigError("grid.points", "must be 0 (auto) or a power of two >= 256");
  }
  if (!(c.grid_window_ps >= 0.0)) throw ConfigError("grid.window", "must be 0 (auto) or positive");
  try {
    const auto g = c.grid();
    sech_pulse(g, c.pulse, c.wavelength_um);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("grid", e.what());
  }
  const auto& p = c.propagation;
  positive(p.total_length_m, "propagation.length");
  if (!c.auto_dz) positive(p.dz_m, "propagation.dz");
  positive(p.temperature_k, "propagation.temperature");
  if (!(c.step.fraction > 0.0 && c.step.fraction <= 1.0)) {
    throw ConfigError("propagation.step_fraction", "must lie in (0, 1]");
  }
  positive(c.step.max_dz_m, "propagation.max_dz");
  try {
    c.resolved_propagation().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("propagation.snapshots", e.what());
  }
  if (c.detection.baseline_traj == 1) throw ConfigError("detection.baseline_traj", "must be 0 or at least 2");
  if (c.detection.budgets.empty()) throw ConfigError("detection.budgets", "must not be empty");
  for (const auto& b : c.detection.budgets) {
    try {
      parse_loss_budget(b, f);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("detection.budgets", e.what());
    }
  }
  try {
    c.resolved_sweep().validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(' ');
    throw ConfigError(msg.rfind("sweep.", 0) == 0 ? msg.substr(0, colon) : "sweep", msg);
  }
}

/// Parses INI text into a config over the defaults.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config", std::string("malformed INI: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError(section, "setting outside a [section]");
    for (const auto& [key, value] : body) apply_setting(base, section + "." + key, value.data());
  }
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  return parse_config(in, std::move(base));
}

/// Full resolved configuration as INI text; parsing it reproduces the config.
inline std::string config_to_ini(const RunConfig& c) {
  using detail::fmt;
  using detail::join;
  std::ostringstream o;
  const auto g = c.grid();
  o << "[run]\nseed = " << c.seed << "\nthreads = " << c.threads << "\n\n";
  o << "[fiber]\nbeta2 = " << fmt(c.fiber.beta2_ps2_per_km) << "\nbeta3 = " << fmt(c.fiber.beta3_ps3_per_km)
    << "\ngamma = " << fmt(c.fiber.gamma_per_w_km) << "\nloss = " << fmt(c.fiber.intrinsic_loss_db_per_km) << "\n\n";
  o << "[raman]\nenabled = " << (c.fiber.raman.enabled ? "true" : "false")
    << "\nfraction = " << fmt(c.fiber.raman.fraction) << "\ntau1 = " << fmt(c.fiber.raman.tau1_fs)
    << "\ntau2 = " << fmt(c.fiber.raman.tau2_fs) << "\n\n";
  o << "[pulse]\nenergy = " << fmt(c.pulse.energy_pj) << "\nfwhm = " << fmt(c.pulse.fwhm_ps)
    << "\nchirp = " << fmt(c.pulse.chirp) << "\nwavelength = " << fmt(c.wavelength_um) << "\n\n";
  o << "[grid]\npoints = " << g->n_points() << "\nwindow = " << fmt(g->window()) << "\n\n";
  const auto p = c.resolved_propagation();
  o << "[propagation]\nlength = " << fmt(p.total_length_m) << "\ndz = " << fmt(p.dz_m)
    << "\nsnapshots = " << join(p.snapshot_distances) << "\nquantum_noise = " << (p.quantum_noise ? "true" : "false")
    << "\nraman_noise = " << (p.raman_noise ? "true" : "false")
    << "\ndistributed_loss = " << (p.distributed_loss ? "true" : "false")
    << "\ntemperature = " << fmt(p.temperature_k) << "\nstep_fraction = " << fmt(c.step.fraction)
    << "\nmax_dz = " << fmt(c.step.max_dz_m) << "\n\n";
  o << "[detection]\nn_traj = " << c.detection.n_traj << "\nbaseline_traj = " << c.detection.baseline_traj
    << "\npairing_rounds = " << c.detection.pairing_rounds << "\nbudgets = " << join(c.detection.budgets) << "\n\n";
  o << "[sweep]\ndurations = " << join(c.sweep.durations_ps) << "\nenergies = " << join(c.sweep.energies_pj)
    << "\ndistances = " << join(c.sweep.distances_m) << "\nn_traj = " << c.sweep.n_traj
    << "\nbaseline_traj = " << c.sweep.baseline_traj << "\n";
  return o.str();
}

}  // namespace fibersqz
