#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "fibersqz/sweep.hpp"

namespace fibersqz {

enum class Format { kCsv, kJson };

inline Format parse_format(const std::string& s) {
  if (s == "csv") return Format::kCsv;
  if (s == "json") return Format::kJson;
  throw std::invalid_argument("unknown format '" + s + "' (expected csv or json)");
}

inline constexpr const char* kDatasetHeader =
    "T_ps,E_pJ,z_m,loss_tag,squeezing_db,antisqueezing_db,theta_opt_rad,N,K,stat_error_db,homodyne_db,P0_W,status";

namespace detail {

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, std::size_t line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("dataset line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

// Text fields never contain the separator; quoting keeps arbitrary failure
// messages safe anyway.
inline std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + '"';
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        out.back() += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace detail

inline std::filesystem::path provenance_sidecar(const std::filesystem::path& csv) {
  auto p = csv;
  p += ".provenance.json";
  return p;
}

inline std::string dataset_to_csv(const SweepDataset& ds) {
  std::string out = kDatasetHeader;
  out += '\n';
  for (const auto& r : ds.records) {
    using detail::format_double;
    out += format_double(r.T_ps) + ',' + format_double(r.E_pJ) + ',' + format_double(r.z_m) + ',' +
           detail::csv_text(r.loss_tag) + ',' + format_double(r.squeezing_db) + ',' +
           format_double(r.antisqueezing_db) + ',' + format_double(r.theta_opt) + ',' + format_double(r.N) + ',' +
           format_double(r.K) + ',' + format_double(r.stat_error_db) + ',' + format_double(r.homodyne_db) + ',' +
           format_double(r.P0_W) + ',' + detail::csv_text(r.status) + '\n';
  }
  return out;
}

inline std::vector<SweepRecord> records_from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kDatasetHeader) {
    throw std::runtime_error("dataset: unexpected CSV header");
  }
  std::vector<SweepRecord> out;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 13) throw std::runtime_error("dataset line " + std::to_string(number) + ": expected 13 fields");
    SweepRecord r;
    auto d = [&](int k) { return detail::parse_double(f[k], number); };
    r.T_ps = d(0);
    r.E_pJ = d(1);
    r.z_m = d(2);
    r.loss_tag = f[3];
    r.squeezing_db = d(4);
    r.antisqueezing_db = d(5);
    r.theta_opt = d(6);
    r.N = d(7);
    r.K = d(8);
    r.stat_error_db = d(9);
    r.homodyne_db = d(10);
    r.P0_W = d(11);
    r.status = f[12];
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string dataset_to_json(const SweepDataset& ds) {
  nlohmann::ordered_json j;
  j["provenance"] = ds.provenance;
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : ds.records) j["records"].push_back(record_to_json(r));
  return j.dump(1) + '\n';
}

inline SweepDataset dataset_from_json(std::istream& in) {
  const auto j = nlohmann::ordered_json::parse(in);
  SweepDataset ds;
  ds.provenance = j.at("provenance");
  for (const auto& r : j.at("records")) ds.records.push_back(record_from_json(r));
  return ds;
}

/// Writes `path` (and for CSV the provenance sidecar next to it).
inline void export_dataset(const SweepDataset& ds, const std::filesystem::path& path, Format format) {
  auto out = detail::open_for_write(path);
  if (format == Format::kCsv) {
    out << dataset_to_csv(ds);
    auto side = detail::open_for_write(provenance_sidecar(path));
    side << ds.provenance.dump(1) << '\n';
  } else {
    out << dataset_to_json(ds);
  }
  if (!out.flush()) throw std::runtime_error("cannot write " + path.string());
}

/// Reads a dataset written by export_dataset; the format follows the extension.
inline SweepDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  if (path.extension() == ".json") return dataset_from_json(in);
  SweepDataset ds;
  ds.records = records_from_csv(in);
  std::ifstream side(provenance_sidecar(path));
  if (side) ds.provenance = nlohmann::ordered_json::parse(side);
  return ds;
}

// ---------------------------------------------------------------- optima

inline constexpr const char* kOptimaHeader = "loss_tag,kind,z_m,T_ps,E_pJ,squeezing_db,N,K,P0_W,refined,has_optimum";

inline std::string optima_to_csv(const std::vector<OptimaCurves>& curves) {
  using detail::format_double;
  std::string out = kOptimaHeader;
  out += '\n';
  auto row = [&](const std::string& tag, const char* kind, const Optimum& o, bool has) {
    out += detail::csv_text(tag) + ',' + kind + ',' + format_double(o.z_m) + ',' + format_double(o.T_ps) + ',' +
           format_double(o.E_pJ) + ',' + format_double(o.squeezing_db) + ',' + format_double(o.N) + ',' +
           format_double(o.K) + ',' + format_double(o.P0_W) + ',' + (o.refined ? "1" : "0") + ',' +
           (has ? "1" : "0") + '\n';
  };
  for (const auto& c : curves) {
    for (const auto& d : c.distances) {
      row(c.loss_tag, "best", d.best, d.has_optimum);
      row(c.loss_tag, "best_duration", d.best_duration, d.has_optimum);
      for (const auto& o : d.per_duration) row(c.loss_tag, "per_duration", o, d.has_optimum);
    }
  }
  return out;
}

inline std::string optima_to_json(const std::vector<OptimaCurves>& curves, const nlohmann::ordered_json& provenance) {
  auto opt = [](const Optimum& o) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr); };
    nlohmann::ordered_json j;
    j["z_m"] = num(o.z_m);
    j["T_ps"] = num(o.T_ps);
    j["E_pJ"] = num(o.E_pJ);
    j["squeezing_db"] = num(o.squeezing_db);
    j["N"] = num(o.N);
    j["K"] = num(o.K);
    j["P0_W"] = num(o.P0_W);
    j["refined"] = o.refined;
    return j;
  };
  nlohmann::ordered_json j;
  j["provenance"] = provenance;
  j["curves"] = nlohmann::ordered_json::array();
  for (const auto& c : curves) {
    nlohmann::ordered_json cj;
    cj["loss_tag"] = c.loss_tag;
    cj["monotone_non_increasing"] = c.monotone_non_increasing;
    cj["notes"] = c.notes;
    cj["distances"] = nlohmann::ordered_json::array();
    for (const auto& d : c.distances) {
      nlohmann::ordered_json dj;
      dj["z_m"] = d.z_m;
      dj["has_optimum"] = d.has_optimum;
      dj["best"] = opt(d.best);
      dj["best_duration"] = opt(d.best_duration);
      dj["per_duration"] = nlohmann::ordered_json::array();
      for (const auto& o : d.per_duration) dj["per_duration"].push_back(opt(o));
      cj["distances"].push_back(dj);
    }
    j["curves"].push_back(cj);
  }
  return j.dump(1) + '\n';
}

}  // namespace fibersqz
