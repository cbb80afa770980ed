#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "fibersqz/grid.hpp"

// Binary snapshot dump, native byte order:
//   char[8]  "FSQZSNP1"
//   u32      n_points, u32 n_distances, u32 n_traj, u32 reserved (0)
//   f64      window_ps, dt_ps, wavelength_um
//   f64      distances_m[n_distances]
//   f64[2]   samples[n_distances][n_traj][n_points]   (re, im) in sqrt(W)

namespace fibersqz {

inline constexpr std::array<char, 8> kSnapshotMagic{'F', 'S', 'Q', 'Z', 'S', 'N', 'P', '1'};

struct SnapshotFile {
  int n_points = 0;
  double window_ps = 0.0;
  double dt_ps = 0.0;
  double wavelength_um = 0.0;
  std::vector<double> distances_m;
  /// fields[d][i] is trajectory i at distances_m[d].
  std::vector<std::vector<std::vector<Complex>>> fields;
};

namespace detail {
template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("snapshot file truncated");
  return v;
}
}  // namespace detail

/// fields[d][i] must all live on the same grid.
inline void write_snapshots(const std::filesystem::path& path, const std::vector<double>& distances,
                            const std::vector<std::vector<ComplexEnvelope>>& fields) {
  if (fields.size() != distances.size() || fields.empty() || fields.front().empty()) {
    throw std::invalid_argument("write_snapshots: need one non-empty trajectory list per distance");
  }
  const auto& first = fields.front().front();
  const auto& grid = first.grid();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kSnapshotMagic.data(), kSnapshotMagic.size());
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(grid.n_points()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(distances.size()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(fields.front().size()));
  detail::put<std::uint32_t>(out, 0);
  detail::put(out, grid.window());
  detail::put(out, grid.dt());
  detail::put(out, first.carrier_wavelength_um());
  for (double z : distances) detail::put(out, z);
  for (const auto& per_distance : fields) {
    if (per_distance.size() != fields.front().size()) throw std::invalid_argument("write_snapshots: ragged ensemble");
    for (const auto& env : per_distance) {
      if (env.grid().n_points() != grid.n_points()) throw std::invalid_argument("write_snapshots: mixed grids");
      const auto s = env.samples();
      out.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(s.size() * sizeof(Complex)));
    }
  }
  if (!out.flush()) throw std::runtime_error("cannot write " + path.string());
}

inline SnapshotFile read_snapshots(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kSnapshotMagic) {
    throw std::runtime_error(path.string() + " is not a snapshot file");
  }
  SnapshotFile f;
  f.n_points = static_cast<int>(detail::get<std::uint32_t>(in));
  const auto nd = detail::get<std::uint32_t>(in);
  const auto nt = detail::get<std::uint32_t>(in);
  detail::get<std::uint32_t>(in);
  f.window_ps = detail::get<double>(in);
  f.dt_ps = detail::get<double>(in);
  f.wavelength_um = detail::get<double>(in);
  for (std::uint32_t d = 0; d < nd; ++d) f.distances_m.push_back(detail::get<double>(in));
  f.fields.assign(nd, std::vector<std::vector<Complex>>(nt, std::vector<Complex>(f.n_points)));
  for (auto& per_distance : f.fields) {
    for (auto& s : per_distance) {
      if (!in.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(s.size() * sizeof(Complex)))) {
        throw std::runtime_error("snapshot file truncated");
      }
    }
  }
  return f;
}

}  // namespace fibersqz
