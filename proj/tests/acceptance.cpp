// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../tools/cli.hpp"
#include "bpim2col/verify.hpp"
#include "bpim2col/workloads.hpp"

using namespace bpim2col;
using namespace bpim2col::workloads;
using sim::Algo;
using sim::Phase;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

const std::vector<Phase> kBackprop{Phase::loss, Phase::gradient};
const std::vector<Algo> kBoth{Algo::traditional, Algo::bp_im2col};

Verdict mapping_equivalence() {
  std::mt19937_64 rng(42);
  const auto m = verify::library_mapping();
  Index elements = 0;
  for (int i = 0; i < 1000; ++i) {
    const RawGeometry raw = verify::random_geometry(rng);
    const LayerGeometry g = LayerGeometry::derive(raw);
    elements += transposed_rows(g) * transposed_cols(g) + dilated_rows(g) * dilated_cols(g);
    if (auto cx = verify::check_mapping(raw, m)) return {false, "case " + std::to_string(i) + ": " + cx->describe()};
  }
  return {true, "1000 geometries, " + std::to_string(elements) + " virtual elements agree"};
}

// Spatial extent capped at 56; channel counts are kept.
constexpr Index kMaxExtent = 56;
constexpr Index kAllChannels = std::numeric_limits<Index>::max();

Verdict backprop_correctness() {
  int layers = 0;
  for (const LayerSpec& full : builtin_catalog()) {
    const LayerSpec spec = shrink(full, kMaxExtent, kAllChannels);
    if (auto cx = verify::check_backprop(spec.raw, 1234)) return {false, spec.name + ": " + cx->describe()};
    const LayerSpec fd = shrink(full, 16, 4);
    if (auto cx = verify::check_finite_differences(fd.raw, 99, 1e-3, 16))
      return {false, fd.name + ": " + cx->describe()};
    ++layers;
  }
  return {true, std::to_string(layers) + " layers exact, finite differences within 1e-3"};
}

Verdict sparsity_range() {
  Verdict v;
  double lo_loss = 1, hi_loss = 0, lo_grad = 1, hi_grad = 0;
  for (const LayerSpec& spec : builtin_catalog()) {
    if (spec.raw.stride != 2) continue;
    const SparsityReport r = sparsity_report(spec);
    const double loss = r.lowered_matrix_sparsity(), grad = r.grad_lowered_sparsity();
    lo_loss = std::min(lo_loss, loss);
    hi_loss = std::max(hi_loss, loss);
    lo_grad = std::min(lo_grad, grad);
    hi_grad = std::max(hi_grad, grad);
    for (auto [what, x] : {std::pair{"loss", loss}, std::pair{"gradient", grad}}) {
      if (x < 0.74 || x > 0.95) {
        v.pass = false;
        v.detail += spec.name + " " + what + fmt(" %.4f out of range; ", x);
      }
    }
  }
  const double anchor =
      sparsity_report(layer_from_shorthand("112/64/64/3/2/1", kCatalogBatch)).loss_operand_sparsity();
  if (std::abs(anchor - 0.7587) > 0.005) {
    v.pass = false;
    v.detail += fmt("anchor %.4f; ", anchor);
  }
  v.detail += fmt("loss [%.4f, %.4f], ", lo_loss, hi_loss) +
              fmt("gradient [%.4f, %.4f], ", lo_grad, hi_grad) + fmt("anchor %.4f", anchor);
  return v;
}

Aggregate catalog_aggregate(const std::vector<LayerSpec>& specs) {
  return aggregate(run_sweep(specs, kBackprop, kBoth, sim::SimConfig{}));
}

Verdict buffer_reduction() {
  Verdict v;
  const Aggregate agg = catalog_aggregate(builtin_catalog());
  double worst = 0;
  for (const ComparisonRow& row : agg.rows) {
    const double gap = std::abs(row.buffer_reduction - row.sparsity);
    worst = std::max(worst, gap);
    if (gap > 0.02) {
      v.pass = false;
      v.detail += row.layer + " " + std::string(sim::to_string(row.phase)) + fmt(" gap %.4f; ", gap);
    }
  }
  // per network, over both backprop phases
  std::map<std::string, std::pair<double, int>> mean;
  for (const ComparisonRow& row : agg.rows) {
    mean[row.network].first += row.buffer_reduction;
    mean[row.network].second += 1;
  }
  double lowest = 1;
  for (const auto& [net, acc] : mean) {
    const double m = acc.first / acc.second;
    lowest = std::min(lowest, m);
    if (m < 0.70) {
      v.pass = false;
      v.detail += net + fmt(" mean %.4f; ", m);
    }
  }
  v.detail += fmt("max |reduction - sparsity| %.4f, lowest network mean %.4f", worst, lowest);
  return v;
}

Verdict compute_parity() {
  Verdict v;
  double worst = 0;
  for (const ComparisonRow& row : catalog_aggregate(table2_layers()).rows) {
    const double t = static_cast<double>(row.traditional.compute_cycles);
    const double d = std::abs(static_cast<double>(row.bp.compute_cycles) - t) / t;
    worst = std::max(worst, d);
    if (d > 0.10) {
      v.pass = false;
      v.detail += row.layer + " " + std::string(sim::to_string(row.phase)) + fmt(" %.4f; ", d);
    }
  }
  v.detail += fmt("max relative difference %.4f", worst);
  return v;
}

Verdict total_ordering() {
  Verdict v;
  double lowest = 1e300;
  std::vector<LayerSpec> strided;
  for (const LayerSpec& s : builtin_catalog())
    if (s.raw.stride >= 2) strided.push_back(s);
  for (const ComparisonRow& row : catalog_aggregate(strided).rows) {
    lowest = std::min(lowest, row.speedup);
    if (row.bp.total_cycles() >= row.traditional.total_cycles()) {
      v.pass = false;
      v.detail += row.layer + " " + std::string(sim::to_string(row.phase)) + fmt(" speedup %.4f; ", row.speedup);
    }
  }
  v.detail += std::to_string(strided.size()) + " layers" + fmt(", lowest speedup %.4f", lowest);
  return v;
}

Verdict prologue_defaults() {
  const sim::PrologueLatency p = sim::SimConfig{}.prologue;
  const bool ok = p.trad_dynamic == 0 && p.trad_stationary == 51 && p.bp_dynamic_loss == 0 &&
                  p.bp_stationary_loss == 68 && p.bp_dynamic_grad == 68 && p.bp_stationary_grad == 51;
  char buf[160];
  std::snprintf(buf, sizeof buf, "traditional %lld/%lld, loss %lld/%lld, gradient %lld/%lld",
                static_cast<long long>(p.trad_dynamic), static_cast<long long>(p.trad_stationary),
                static_cast<long long>(p.bp_dynamic_loss), static_cast<long long>(p.bp_stationary_loss),
                static_cast<long long>(p.bp_dynamic_grad), static_cast<long long>(p.bp_stationary_grad));
  return {ok, buf};
}

Verdict sweep_determinism() {
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "bpim2col_acceptance";
  fs::remove_all(base);
  std::string csv[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path dir = base / std::to_string(i);
    std::ostringstream out, err;
    const int code = cli::run({"sweep", "--phase", "all", "--seed", "7", "--out", dir.string()}, out, err);
    if (code != 0) return {false, "sweep exited with " + std::to_string(code) + ": " + err.str()};
    std::ifstream f(dir / "comparison.csv", std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    csv[i] = s.str();
  }
  fs::remove_all(base);
  if (csv[0].empty()) return {false, "empty CSV"};
  if (csv[0] != csv[1]) return {false, "CSV differs between runs"};
  return {true, std::to_string(csv[0].size()) + " bytes identical across two sweeps"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--only", only, "run a single criterion")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"implicit/explicit mapping equivalence", mapping_equivalence},
      {"backprop correctness", backprop_correctness},
      {"lowered-matrix sparsity", sparsity_range},
      {"buffer-port reduction tracks sparsity", buffer_reduction},
      {"compute-cycle parity", compute_parity},
      {"total-time ordering", total_ordering},
      {"prologue defaults", prologue_defaults},
      {"sweep determinism", sweep_determinism},
  };

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (only != 0 && only != n) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s  %s (%s) [%.1fs]\n", n, v.pass ? "PASS" : "FAIL", criteria[i].first,
                v.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
