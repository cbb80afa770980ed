#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "fibersqz/dataset_io.hpp"
#include "fibersqz/sweep.hpp"

using namespace fibersqz;
namespace fs = std::filesystem;

namespace {

SweepSpec small_spec() {
  SweepSpec s;
  s.durations_ps = {0.2, 0.3};
  s.energies_pj = {40.0, 60.0};
  s.distances_m = {0.5, 1.0};
  s.n_traj = 40;
  s.budgets = {"none", "fiber+20%"};
  s.master_seed = 3;
  return s;
}

fs::path scratch_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("fibersqz_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Synthetic slice with a bowl at (T0, E0): s = 10 (ln E - ln E0)^2 + 40 (T - T0)^2 - 12 dB.
SweepDataset bowl_dataset(double T0, double E0) {
  SweepDataset ds;
  for (double z : {10.0, 20.0}) {
    for (double T : linear_axis(0.1, 0.5, 9)) {
      for (double E : log_axis(20.0, 120.0, 9)) {
        SweepRecord r;
        r.T_ps = T;
        r.E_pJ = E;
        r.z_m = z;
        r.loss_tag = "none";
        const double l = std::log(E / E0);
        r.squeezing_db = 10.0 * l * l + 40.0 * (T - T0) * (T - T0) - 12.0;
        r.antisqueezing_db = 10.0;
        r.stat_error_db = 0.2;
        r.homodyne_db = r.squeezing_db;
        ds.records.push_back(r);
      }
    }
  }
  return ds;
}

std::string optima_text(const SweepDataset& ds) { return optima_to_csv({extract_optima(ds)}); }

}  // namespace

TEST(Axes, LinearAndLog) {
  const auto t = linear_axis(0.11, 0.5, 14);
  EXPECT_EQ(t.front(), 0.11);
  EXPECT_EQ(t.back(), 0.5);
  EXPECT_NEAR(t[1] - t[0], 0.03, 1e-15);
  const auto e = log_axis(22.5, 120.0, 14);
  EXPECT_EQ(e.back(), 120.0);
  EXPECT_NEAR(e[1] / e[0], e[13] / e[12], 1e-12);
  EXPECT_THROW(linear_axis(0, 1, 1), std::invalid_argument);
  EXPECT_THROW(log_axis(0, 1, 3), std::invalid_argument);
}

TEST(LossBudgetTags, Parse) {
  const FiberParams f;
  EXPECT_EQ(parse_loss_budget("none", f).total_efficiency(), 1.0);
  EXPECT_EQ(parse_loss_budget("fiber", f).intrinsic_loss_db_per_km, f.intrinsic_loss_db_per_km);
  EXPECT_DOUBLE_EQ(parse_loss_budget("fiber+5%", f).external_efficiency, 0.95);
  EXPECT_DOUBLE_EQ(parse_loss_budget("fiber+12.5%", f).external_efficiency, 0.875);
  for (const char* bad : {"fiber+", "fiber+%", "fiber+100%", "fiber+-3%", "fiber+5", "lossy"}) {
    EXPECT_THROW(parse_loss_budget(bad, f), std::invalid_argument) << bad;
  }
}

TEST(SweepSpec, Validation) {
  EXPECT_NO_THROW(SweepSpec{}.validate());
  auto s = small_spec();
  s.durations_ps = {0.3, 0.2};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec();
  s.budgets = {"bogus"};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec();
  s.n_traj = 1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(SweepCost, DefaultGridSize) {
  const auto c = estimate_sweep(SweepSpec{}, 4);
  EXPECT_EQ(c.cells, 196);
  EXPECT_EQ(c.records, 196LL * 8 * 4);
  EXPECT_GT(c.estimated_seconds, 0.0);
  EXPECT_GT(c.peak_memory_bytes, 0.0);
}

TEST(CellSeed, DependsOnValuesOnly) {
  EXPECT_EQ(cell_seed(1, 0.2, 50.0), cell_seed(1, 0.2, 50.0));
  EXPECT_NE(cell_seed(1, 0.2, 50.0), cell_seed(1, 50.0, 0.2));
  EXPECT_NE(cell_seed(1, 0.2, 50.0), cell_seed(2, 0.2, 50.0));
  auto a = small_spec(), b = small_spec();
  b.durations_ps.push_back(0.4);
  EXPECT_EQ(cell_key(a, 0.2, 40.0), cell_key(b, 0.2, 40.0));
  b = small_spec();
  b.n_traj = 41;
  EXPECT_NE(cell_key(a, 0.2, 40.0), cell_key(b, 0.2, 40.0));
}

TEST(Sweep, RecordsCoverGridAndMatchSingleCell) {
  const auto spec = small_spec();
  SweepOptions o;
  o.threads = 2;
  const auto ds = run_sweep(spec, o);
  ASSERT_EQ(ds.records.size(), 2u * 2 * 2 * 2);
  EXPECT_TRUE(ds.complete());
  EXPECT_TRUE(ds.provenance.at("complete").get<bool>());
  EXPECT_EQ(ds.provenance.at("master_seed").get<std::uint64_t>(), 3u);
  const auto cell = run_cell(spec, 0.3, 60.0);
  SweepDataset one;
  one.records = cell;
  SweepDataset part;
  for (const auto& r : ds.records) {
    if (r.T_ps == 0.3 && r.E_pJ == 60.0) part.records.push_back(r);
  }
  EXPECT_EQ(dataset_to_csv(one), dataset_to_csv(part));
  for (const auto& r : ds.records) {
    EXPECT_EQ(r.status, "ok");
    EXPECT_NEAR(r.P0_W, r.E_pJ / (2.0 * r.T_ps / 1.763), 1e-9);
    EXPECT_NEAR(r.N, std::sqrt(r.E_pJ / soliton_energy(spec.fiber, r.T_ps)), 1e-12);
    if (r.loss_tag == "fiber+20%") {
      EXPECT_GT(r.squeezing_db, -7.0);
    }
  }
}

TEST(Sweep, ThreadCountDoesNotChangeResults) {
  const auto spec = small_spec();
  SweepOptions one, many;
  one.threads = 1;
  many.threads = 4;
  EXPECT_EQ(dataset_to_csv(run_sweep(spec, one)), dataset_to_csv(run_sweep(spec, many)));
}

TEST(Sweep, CheckpointResumeIsBitIdentical) {
  const auto spec = small_spec();
  const auto dir = scratch_dir("ckpt");
  SweepOptions o;
  o.threads = 2;
  o.checkpoint_dir = dir;
  int reused = 0;
  o.progress = [&](int, int, bool r) { reused += r; };
  const auto first = dataset_to_csv(run_sweep(spec, o));
  EXPECT_EQ(reused, 0);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  ASSERT_EQ(files.size(), 4u);

  const auto second = dataset_to_csv(run_sweep(spec, o));
  EXPECT_EQ(reused, 4);
  EXPECT_EQ(first, second);

  // An interrupted write and a missing cell are both recomputed.
  std::sort(files.begin(), files.end());
  { std::ofstream(files[0], std::ios::trunc) << "{\"key\": \"trunc"; }
  fs::remove(files[1]);
  reused = 0;
  const auto third = dataset_to_csv(run_sweep(spec, o));
  EXPECT_EQ(reused, 2);
  EXPECT_EQ(first, third);

  // A different spec ignores foreign checkpoints.
  auto other = spec;
  other.master_seed = 4;
  reused = 0;
  run_sweep(other, o);
  EXPECT_EQ(reused, 0);
  fs::remove_all(dir);
}

TEST(DatasetIo, CsvAndJsonRoundTripExactly) {
  auto ds = run_sweep(small_spec());
  ds.records.front().N = std::numeric_limits<double>::quiet_NaN();
  ds.records.back().status = "failed: quoted, \"text\"";
  const auto dir = scratch_dir("io");
  for (auto fmt : {Format::kCsv, Format::kJson}) {
    const auto path = dir / (fmt == Format::kCsv ? "d.csv" : "d.json");
    export_dataset(ds, path, fmt);
    const auto back = load_dataset(path);
    EXPECT_EQ(dataset_to_csv(back), dataset_to_csv(ds));
    EXPECT_EQ(back.provenance, ds.provenance);
    const auto again = dir / (fmt == Format::kCsv ? "e.csv" : "e.json");
    export_dataset(back, again, fmt);
    std::ifstream a(path), b(again);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    EXPECT_EQ(sa.str(), sb.str());
  }
  EXPECT_TRUE(fs::exists(provenance_sidecar(dir / "d.csv")));
  fs::remove_all(dir);
}

TEST(DatasetIo, RejectsForeignCsv) {
  std::istringstream in("a,b,c\n1,2,3\n");
  EXPECT_THROW(records_from_csv(in), std::runtime_error);
  std::istringstream short_row(std::string(kDatasetHeader) + "\n1,2,3\n");
  EXPECT_THROW(records_from_csv(short_row), std::runtime_error);
  EXPECT_THROW(load_dataset("/nonexistent/sweep.csv"), std::runtime_error);
}

TEST(ParabolicVertex, RecoversMinimum) {
  const std::vector<double> x{0.0, 0.25, 0.5, 0.75};
  std::vector<double> y;
  for (double v : x) y.push_back((v - 0.3) * (v - 0.3) - 1.0);
  double xo = 0.0, yo = 0.0;
  ASSERT_TRUE(parabolic_vertex(x, y, 1, xo, yo));
  EXPECT_NEAR(xo, 0.3, 1e-12);
  EXPECT_NEAR(yo, -1.0, 1e-12);
  EXPECT_LE(yo, y[1]);
  EXPECT_FALSE(parabolic_vertex(x, y, 0, xo, yo));
  EXPECT_FALSE(parabolic_vertex(x, y, 3, xo, yo));
  for (auto& v : y) v = -v;
  EXPECT_FALSE(parabolic_vertex(x, y, 1, xo, yo));
}

TEST(Optima, FindsSyntheticBowl) {
  const auto ds = bowl_dataset(0.33, 55.0);
  const auto c = extract_optima(ds);
  ASSERT_EQ(c.distances.size(), 2u);
  for (const auto& d : c.distances) {
    EXPECT_TRUE(d.has_optimum);
    EXPECT_NEAR(d.best.E_pJ, 55.0, 0.5);
    EXPECT_NEAR(d.best_duration.T_ps, 0.33, 0.005);
    EXPECT_NEAR(d.best_duration.E_pJ, 55.0, 1.0);
    EXPECT_LE(d.best_duration.squeezing_db, d.best.squeezing_db + 1e-12);
    EXPECT_EQ(d.per_duration.size(), 9u);
  }
  EXPECT_TRUE(c.monotone_non_increasing);
}

TEST(Optima, FlatSurfaceHasNoOptimum) {
  auto ds = bowl_dataset(0.3, 50.0);
  for (auto& r : ds.records) r.squeezing_db = -6.0 + 0.01 * std::sin(r.T_ps * 97.0 + r.E_pJ);
  for (const auto& d : extract_optima(ds).distances) EXPECT_FALSE(d.has_optimum);
}

TEST(Optima, OrderOfRecordsIrrelevant) {
  auto ds = bowl_dataset(0.27, 70.0);
  const auto reference = optima_text(ds);
  std::mt19937 rng(5);
  for (int k = 0; k < 3; ++k) {
    std::shuffle(ds.records.begin(), ds.records.end(), rng);
    EXPECT_EQ(optima_text(ds), reference);
  }
}

TEST(Optima, DetectsWorseningWithLength) {
  auto ds = bowl_dataset(0.3, 50.0);
  for (auto& r : ds.records) {
    if (r.z_m == 20.0) r.squeezing_db += 3.0;
  }
  const auto c = extract_optima(ds);
  EXPECT_FALSE(c.monotone_non_increasing);
  EXPECT_EQ(c.notes.size(), 1u);
}

TEST(Optima, IncompleteOrDuplicateSliceIsRejected) {
  auto ds = bowl_dataset(0.3, 50.0);
  auto dup = ds;
  dup.records.push_back(dup.records.front());
  EXPECT_THROW(extract_optima(dup), std::invalid_argument);
  ds.records.erase(ds.records.begin() + 5);
  EXPECT_THROW(extract_optima(ds), std::invalid_argument);
  EXPECT_THROW(extract_optima(bowl_dataset(0.3, 50.0), "fiber"), std::invalid_argument);
}

TEST(Optima, LossScanReappliesBudgets) {
  const auto ds = bowl_dataset(0.3, 50.0);
  const auto scan = loss_scan(ds, {"none", "fiber+20%"});
  ASSERT_EQ(scan.size(), 2u);
  EXPECT_EQ(optima_to_csv({scan[0]}), optima_text(ds));
  for (const auto& d : scan[1].distances) {
    // V = 0.8 * 10^(-1.2) + 0.2 at the grid minimum.
    EXPECT_GT(d.best.squeezing_db, -6.2);
    EXPECT_LT(d.best.squeezing_db, -5.5);
  }
  EXPECT_THROW(loss_scan(ds, {"fiber+200%"}), std::invalid_argument);
}

TEST(Optima, LinearSweepIsFlat) {
  auto spec = small_spec();
  spec.fiber.gamma_per_w_km = 0.0;
  spec.durations_ps = {0.2, 0.3, 0.4};
  spec.energies_pj = {30.0, 50.0, 80.0};
  spec.n_traj = 200;
  spec.budgets = {"none"};
  const auto ds = run_sweep(spec);
  for (const auto& r : ds.records) {
    EXPECT_NEAR(r.squeezing_db, 0.0, 5.0 * r.stat_error_db);
    EXPECT_TRUE(std::isnan(r.N));
  }
  for (const auto& d : extract_optima(ds).distances) EXPECT_FALSE(d.has_optimum);
}
