#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "bpim2col/geometry_json.hpp"
#include "bpim2col/tensor_ref.hpp"
#include "bpim2col/verify.hpp"
#include "bpim2col/workloads.hpp"

#ifndef BPIM2COL_VERSION
#define BPIM2COL_VERSION "0.0.0"
#endif

namespace bpim2col::cli {
namespace {

namespace fs = std::filesystem;
using workloads::LayerSpec;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string layer;
  std::string config;
  std::string phase;
  std::string algo = "both";
  int array_dim = 16;
  int data_bytes = 4;
  Index batch = workloads::kCatalogBatch;
  std::uint64_t seed = 42;
  bool check = false;
  std::string out;
  double overlap = 0.0;
  int cases = 1000;
  std::string fault = "none";
  std::string catalog = "full";
};

void init_logging(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("bpim2col", sink);
  logger->set_pattern("[%l] %v");
  const char* env = std::getenv("BPIM2COL_LOG");
  logger->set_level(env != nullptr ? spdlog::level::from_str(env) : spdlog::level::warn);
  spdlog::set_default_logger(logger);
}

sim::SimConfig sim_config(const Options& o) {
  sim::SimConfig cfg;
  cfg.array_dim = o.array_dim;
  cfg.data_bytes = o.data_bytes;
  cfg.reorg.overlap = o.overlap;
  cfg.validate();
  return cfg;
}

std::vector<sim::Phase> phases(const std::string& text, bool backprop_default) {
  if (text.empty()) {
    if (backprop_default) return {sim::Phase::loss, sim::Phase::gradient};
    return {sim::Phase::inference, sim::Phase::loss, sim::Phase::gradient};
  }
  if (text == "all") return {sim::Phase::inference, sim::Phase::loss, sim::Phase::gradient};
  return {sim::parse_phase(text)};
}

std::vector<sim::Algo> algos(const std::string& text) {
  if (text == "both") return {sim::Algo::traditional, sim::Algo::bp_im2col};
  return {sim::parse_algo(text)};
}

std::vector<LayerSpec> load_layers(const Options& o, bool allow_catalog) {
  if (!o.layer.empty() && !o.config.empty()) {
    throw sim::ConfigError("--layer and --config are mutually exclusive");
  }
  if (!o.layer.empty()) return {workloads::layer_from_shorthand(o.layer, o.batch)};
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw IoError("cannot read " + o.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw InvalidGeometry(o.config + ": " + e.what());
    }
    return workloads::layers_from_json(j, o.batch);
  }
  if (!allow_catalog) throw sim::ConfigError("one of --layer or --config is required");
  std::vector<LayerSpec> specs =
      o.catalog == "table2" ? workloads::table2_layers() : workloads::builtin_catalog();
  for (LayerSpec& s : specs) s.raw.batch = o.batch;
  return specs;
}

nlohmann::json config_json(const std::string& command, const Options& o,
                           const std::vector<LayerSpec>& specs, const sim::SimConfig& cfg) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& s : specs) {
    layers.push_back({{"name", s.name},
                      {"network", s.network},
                      {"geometry", raw_geometry_to_json(s.raw)}});
  }
  const auto& p = cfg.prologue;
  return {{"command", command},
          {"phase", o.phase.empty() ? "default" : o.phase},
          {"algo", o.algo},
          {"seed", o.seed},
          {"layers", layers},
          {"sim",
           {{"array_dim", cfg.array_dim},
            {"data_bytes", cfg.data_bytes},
            {"burst_overhead_bytes", cfg.burst_overhead_bytes},
            {"buffer_a_depth", cfg.buffer_a_depth},
            {"buffer_b_depth", cfg.buffer_b_depth},
            {"reorg",
             {{"bytes_multiplier", cfg.reorg.bytes_multiplier},
              {"cycles_per_element", cfg.reorg.cycles_per_element},
              {"overlap", cfg.reorg.overlap}}},
            {"prologue",
             {{"trad_dynamic", p.trad_dynamic},
              {"trad_stationary", p.trad_stationary},
              {"bp_dynamic_loss", p.bp_dynamic_loss},
              {"bp_stationary_loss", p.bp_stationary_loss},
              {"bp_dynamic_grad", p.bp_dynamic_grad},
              {"bp_stationary_grad", p.bp_stationary_grad}}}}}};
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

std::string to_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

Tensor4D reference_result(sim::Phase phase, const LayerGeometry& g,
                          const workloads::SyntheticOperands& ops) {
  switch (phase) {
    case sim::Phase::inference:
      return ref::conv_forward(ops.input, ops.kernel, g);
    case sim::Phase::loss:
      return ref::loss_backward_ref(ops.d_out, ops.kernel, g);
    case sim::Phase::gradient:
      break;
  }
  return ref::gradient_backward_ref(ops.input, ops.d_out, g);
}

int cmd_verify(const Options& o, std::ostream& out) {
  if (o.cases <= 0) {
    spdlog::warn("no cases run");
    out << "verify: no cases run\n";
    return kOk;
  }
  verify::SuiteOptions opts;
  opts.seed = o.seed;
  opts.cases = o.cases;
  opts.mapping = verify::mutated_mapping(verify::parse_fault(o.fault));
  const verify::SuiteResult r = verify::run_suite(opts);
  out << "verify: seed " << o.seed << ", " << r.mapping_cases << " mapping cases ("
      << r.virtual_elements << " virtual elements), " << r.backprop_cases << " backprop cases, "
      << r.fd_cases << " finite-difference cases\n";
  if (!r.ok()) {
    out << "FAIL at case " << r.failing_case << "\n";
    out << "counterexample: " << r.failure->describe() << "\n";
    return kVerifyFailed;
  }
  out << "all checks passed\n";
  return kOk;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const std::vector<LayerSpec> specs = load_layers(o, false);
  const sim::SimConfig cfg = sim_config(o);
  const auto ph = phases(o.phase, false);
  const auto al = algos(o.algo);
  int status = kOk;

  std::vector<workloads::LayerRun> runs;
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& spec = specs[i];
    const LayerGeometry g = spec.geometry();
    std::optional<workloads::SyntheticOperands> ops;
    if (o.check) ops = workloads::make_operands(g, o.seed);
    nlohmann::json reports = nlohmann::json::array();
    for (sim::Phase phase : ph)
      for (sim::Algo algo : al) {
        spdlog::info("simulating {} {} {}", spec.name, sim::to_string(phase), sim::to_string(algo));
        const sim::Operands view = ops ? ops->view() : sim::Operands{};
        const sim::RunResult r = sim::run_gemm(phase, algo, g, ops ? &view : nullptr, cfg);
        nlohmann::json j = workloads::report_to_json(r.report);
        if (ops) {
          const bool pass = *r.result == reference_result(phase, g, *ops);
          j["check"] = pass ? "pass" : "fail";
          if (!pass) status = kVerifyFailed;
        }
        reports.push_back(std::move(j));
        runs.push_back({i, spec, r.report});
      }
    layers.push_back({{"layer", spec.name},
                      {"network", spec.network},
                      {"geometry", raw_geometry_to_json(spec.raw)},
                      {"reports", reports}});
  }

  nlohmann::json doc = {{"layers", layers}};
  std::optional<workloads::Aggregate> agg;
  if (al.size() == 2) {
    agg = workloads::aggregate(runs);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : agg->rows) rows.push_back(workloads::row_to_json(row));
    doc["comparisons"] = rows;
  }
  if (!o.out.empty()) {
    std::ostringstream csv;
    workloads::write_comparison_csv(csv, runs, agg.value_or(workloads::Aggregate{}));
    write_file(o.out, csv.str());
  } else {
    out << to_text(doc);
  }
  if (status != kOk) spdlog::error("numeric check against the reference failed");
  return status;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const std::vector<LayerSpec> specs = load_layers(o, true);
  const sim::SimConfig cfg = sim_config(o);
  const auto ph = phases(o.phase, true);
  const auto al = algos(o.algo);
  const fs::path dir = o.out.empty() ? fs::path("sweep_out") : fs::path(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());

  const auto runs = workloads::run_sweep(specs, ph, al, cfg);
  const workloads::Aggregate agg =
      al.size() == 2 ? workloads::aggregate(runs) : workloads::Aggregate{};

  std::ostringstream csv;
  workloads::write_comparison_csv(csv, runs, agg);
  write_file(dir / "comparison.csv", csv.str());

  const nlohmann::json config = config_json("sweep", o, specs, cfg);
  nlohmann::json summary = workloads::summary_to_json(agg);
  summary["config"] = config;
  write_file(dir / "summary.json", to_text(summary));

  const RunManifest manifest{"sweep", digest(config), o.seed, utc_now(), BPIM2COL_VERSION};
  write_file(dir / "manifest.json", to_text(manifest.to_json()));

  out << "sweep: " << specs.size() << " layers, " << runs.size() << " runs -> " << dir.string()
      << "\n";
  for (const auto& n : agg.networks) {
    char line[160];
    std::snprintf(line, sizeof line, "  %-14s %-9s speedup %.3f  buffer reduction %.3f\n",
                  n.network.c_str(), std::string(sim::to_string(n.phase)).c_str(),
                  n.geomean_speedup, n.geomean_buffer_reduction);
    out << line;
  }
  return kOk;
}

int cmd_sparsity(const Options& o, std::ostream& out) {
  const std::vector<LayerSpec> specs = load_layers(o, true);
  nlohmann::json arr = nlohmann::json::array();
  int status = kOk;
  for (const LayerSpec& s : specs) {
    const workloads::SparsityReport r = workloads::sparsity_report(s);
    nlohmann::json j = workloads::sparsity_to_json(s, r);
    if (o.check) {
      const bool pass = r == workloads::sparsity_report_materialized(s);
      j["check"] = pass ? "pass" : "fail";
      if (!pass) status = kVerifyFailed;
    }
    arr.push_back(std::move(j));
  }
  if (!o.out.empty()) {
    write_file(o.out, to_text(arr));
  } else {
    out << to_text(arr);
  }
  return status;
}

void add_layer_options(CLI::App* sub, Options& o) {
  sub->add_option("--layer", o.layer, "layer shorthand H/C/N/K/S/P");
  sub->add_option("--config", o.config, "layer description JSON file");
  sub->add_option("--batch", o.batch, "batch size")->check(CLI::PositiveNumber);
}

void add_sim_options(CLI::App* sub, Options& o) {
  sub->add_option("--phase", o.phase, "inference|loss|gradient|all")
      ->check(CLI::IsMember({"inference", "loss", "gradient", "all"}));
  sub->add_option("--algo", o.algo, "traditional|bp|both")
      ->check(CLI::IsMember({"traditional", "bp", "bp_im2col", "both"}));
  sub->add_option("--array-dim", o.array_dim, "PE array dimension")->check(CLI::Range(1, 64));
  sub->add_option("--data-bytes", o.data_bytes, "bytes per element")->check(CLI::Range(1, 16));
  sub->add_option("--overlap", o.overlap, "hidden fraction of host reorganization")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--seed", o.seed, "seed for synthetic tensors");
}

}  // namespace

nlohmann::json RunManifest::to_json() const {
  return {{"command", command},
          {"config_digest", config_digest},
          {"seed", seed},
          {"timestamp", timestamp},
          {"version", version}};
}

std::string digest(const nlohmann::json& canonical) {
  const std::string text = canonical.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  init_logging(err);
  Options o;
  CLI::App app{"Implicit im2col for backpropagation on a systolic-array simulator",
               "bpim2col"};
  app.set_version_flag("--version", BPIM2COL_VERSION);
  app.require_subcommand(1);

  auto* verify = app.add_subcommand("verify", "randomized implicit-vs-explicit checks");
  verify->add_option("--seed", o.seed, "random seed");
  verify->add_option("--cases", o.cases, "number of random geometries");
  verify->add_option("--inject-fault", o.fault)->group("");

  auto* simulate = app.add_subcommand("simulate", "simulate one layer");
  add_layer_options(simulate, o);
  add_sim_options(simulate, o);
  simulate->add_flag("--check", o.check, "verify numeric results against the reference");
  simulate->add_option("--out", o.out, "write comparison CSV to this file");

  auto* sweep = app.add_subcommand("sweep", "simulate a layer catalog");
  add_layer_options(sweep, o);
  add_sim_options(sweep, o);
  sweep->add_option("--catalog", o.catalog, "builtin catalog when no layers are given")
      ->check(CLI::IsMember({"full", "table2"}));
  sweep->add_option("--out", o.out, "output directory");

  auto* sparsity = app.add_subcommand("sparsity", "structural zero fractions");
  add_layer_options(sparsity, o);
  sparsity->add_option("--catalog", o.catalog, "builtin catalog when no layers are given")
      ->check(CLI::IsMember({"full", "table2"}));
  sparsity->add_flag("--check", o.check, "cross-check against materialization");
  sparsity->add_option("--out", o.out, "write JSON to this file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*verify) return cmd_verify(o, out);
    if (*simulate) return cmd_simulate(o, out);
    if (*sweep) return cmd_sweep(o, out);
    return cmd_sparsity(o, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    // InvalidGeometry, ConfigError, ShapeMismatch and unknown fault names
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const workloads::MissingCounterpart& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace bpim2col::cli
