#include "bpim2col/workloads.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <random>
#include <tuple>

#include "bpim2col/bp_im2col.hpp"
#include "bpim2col/geometry_json.hpp"
#include "bpim2col/tensor_ref.hpp"

namespace bpim2col::workloads {
namespace {

LayerSpec entry(const char* network, const char* name, const char* shorthand) {
  LayerSpec s;
  s.raw = parse_layer_shorthand(shorthand, kCatalogBatch);
  s.name = name != nullptr ? std::string(network) + "." + name : std::string(shorthand);
  s.network = network;
  return s;
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double reduction(Index bp, Index trad) {
  if (trad == 0) return 0.0;
  return 1.0 - static_cast<double>(bp) / static_cast<double>(trad);
}

// Geometric mean; a zero term makes the mean zero.
double geomean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double log_sum = 0.0;
  for (double x : v) {
    if (x <= 0.0) return 0.0;
    log_sum += std::log(x);
  }
  return std::exp(log_sum / static_cast<double>(v.size()));
}

int phase_rank(sim::Phase p) { return static_cast<int>(p); }

}  // namespace

std::vector<LayerSpec> table2_layers() {
  return {
      entry("table2", nullptr, "224/3/64/3/2/0"),
      entry("table2", nullptr, "112/64/64/3/2/1"),
      entry("table2", nullptr, "56/256/512/1/2/0"),
      entry("table2", nullptr, "28/244/244/3/2/1"),
      entry("table2", nullptr, "14/1024/2048/1/2/0"),
  };
}

std::vector<LayerSpec> builtin_catalog() {
  std::vector<LayerSpec> c = table2_layers();
  const std::vector<LayerSpec> nets = {
      entry("alexnet", "conv1", "224/3/64/11/4/2"),
      entry("resnet50", "conv1", "224/3/64/7/2/3"),
      entry("resnet50", "layer2.0.conv2", "56/128/128/3/2/1"),
      entry("resnet50", "layer2.0.downsample", "56/256/512/1/2/0"),
      entry("resnet50", "layer3.0.conv2", "28/256/256/3/2/1"),
      entry("resnet50", "layer3.0.downsample", "28/512/1024/1/2/0"),
      entry("resnet50", "layer4.0.conv2", "14/512/512/3/2/1"),
      entry("resnet50", "layer4.0.downsample", "14/1024/2048/1/2/0"),
      entry("squeezenet1_1", "conv1", "224/3/64/3/2/0"),
      // stand-ins
      entry("googlenet", "conv1", "224/3/64/7/2/3"),
      entry("mobilenet_v1", "conv1", "224/3/32/3/2/1"),
  };
  c.insert(c.end(), nets.begin(), nets.end());
  return c;
}

LayerSpec layer_from_shorthand(const std::string& text, Index batch) {
  LayerSpec s;
  s.raw = parse_layer_shorthand(text, batch);
  s.name = format_layer_shorthand(s.raw);
  s.network = "custom";
  return s;
}

std::vector<LayerSpec> layers_from_json(const nlohmann::json& j, Index default_batch) {
  const nlohmann::json* list = &j;
  if (j.is_object() && j.contains("layers")) list = &j.at("layers");
  std::vector<LayerSpec> out;
  auto one = [&](const nlohmann::json& e) {
    LayerSpec s;
    s.raw = raw_geometry_from_json(e, default_batch);
    (void)LayerGeometry::derive(s.raw);
    s.name = e.contains("name") && e.at("name").is_string() ? e.at("name").get<std::string>()
                                                             : format_layer_shorthand(s.raw);
    s.network = e.contains("network") && e.at("network").is_string()
                    ? e.at("network").get<std::string>()
                    : "custom";
    out.push_back(std::move(s));
  };
  if (list->is_array()) {
    for (const auto& e : *list) one(e);
  } else {
    one(*list);
  }
  if (out.empty()) throw InvalidGeometry("layer file contains no layers");
  return out;
}

LayerSpec shrink(const LayerSpec& spec, Index max_extent, Index max_channels) {
  LayerSpec s = spec;
  auto extent = [&](Index h, Index k, Index p) {
    return std::max(std::min(h, max_extent), std::max<Index>(1, k - 2 * p));
  };
  s.raw.in_height = extent(spec.raw.in_height, spec.raw.kernel_h, spec.raw.pad_h);
  s.raw.in_width = extent(spec.raw.in_width, spec.raw.kernel_w, spec.raw.pad_w);
  s.raw.in_channels = std::min(spec.raw.in_channels, max_channels);
  s.raw.out_channels = std::min(spec.raw.out_channels, max_channels);
  return s;
}

SyntheticOperands make_operands(const LayerGeometry& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Tensor4D& t) {
    for (Scalar& v : t.data()) v = static_cast<Scalar>(static_cast<int>(rng() % 7) - 3);
  };
  SyntheticOperands ops{Tensor4D(input_dims(g)), Tensor4D(kernel_dims(g)),
                        Tensor4D(output_dims(g))};
  fill(ops.input);
  fill(ops.kernel);
  fill(ops.d_out);
  return ops;
}

SparsityReport sparsity_report(const LayerSpec& spec) {
  const LayerGeometry g = spec.geometry();
  const Index planes = g.batch() * g.out_channels();
  SparsityReport r;

  Index loss_zeros = 0;
  for (Index h = 0; h < g.loss_map_height(); ++h)
    for (Index w = 0; w < g.loss_map_width(); ++w)
      if (in_area0_transposed(h, w, g) || in_area1_transposed(h, w, g)) ++loss_zeros;
  r.loss_map = {planes * loss_zeros, planes * g.loss_map_height() * g.loss_map_width()};

  Index grad_zeros = 0;
  for (Index h = 0; h < g.dilated_height(); ++h)
    for (Index w = 0; w < g.dilated_width(); ++w)
      if (in_zero_dilated(h, w, g)) ++grad_zeros;
  r.grad_map = {planes * grad_zeros, planes * g.dilated_height() * g.dilated_width()};

  const Index t_total = transposed_rows(g) * transposed_cols(g);
  r.loss_lowered = {t_total - transposed_nonzeros(g), t_total};
  const Index d_total = dilated_rows(g) * dilated_cols(g);
  r.grad_lowered = {d_total - dilated_nonzeros(g), d_total};
  return r;
}

SparsityReport sparsity_report_materialized(const LayerSpec& spec) {
  const LayerGeometry full = spec.geometry();
  RawGeometry plane_raw = spec.raw;
  plane_raw.batch = 1;
  plane_raw.out_channels = 1;
  const LayerGeometry g = LayerGeometry::derive(plane_raw);
  const Index planes = full.batch() * full.out_channels();

  const Tensor4D ones(output_dims(g), 1.0F);
  auto count = [planes](std::span<const Scalar> values) {
    Index zeros = 0;
    for (Scalar v : values) zeros += (v == 0) ? 1 : 0;
    return ZeroCount{planes * zeros, planes * static_cast<Index>(values.size())};
  };
  SparsityReport r;
  r.loss_map = count(ref::materialize_loss_operand(ones, g).data());
  r.grad_map = count(ref::materialize_dilated_operand(ones, g).data());
  r.loss_lowered = count(ref::explicit_im2col(ones, ref::LoweringMode::transposed, g).data());
  r.grad_lowered = count(ref::explicit_im2col(ones, ref::LoweringMode::dilated, g).data());
  return r;
}

ComparisonRow compare(const LayerRun& traditional, const LayerRun& bp) {
  ComparisonRow row;
  row.catalog_index = traditional.catalog_index;
  row.layer = traditional.spec.name;
  row.network = traditional.spec.network;
  row.phase = traditional.report.phase;
  row.traditional = traditional.report;
  row.bp = bp.report;
  const Index bp_total = bp.report.total_cycles();
  row.speedup = bp_total == 0 ? 1.0
                              : static_cast<double>(traditional.report.total_cycles()) /
                                    static_cast<double>(bp_total);
  row.buffer_reduction = reduction(bp.report.sparse_operand_port_bytes(),
                                   traditional.report.sparse_operand_port_bytes());
  row.offchip_reduction = reduction(bp.report.offchip.total(), traditional.report.offchip.total());
  row.sparsity = traditional.report.operand_sparsity();
  return row;
}

Aggregate aggregate(const std::vector<LayerRun>& runs) {
  using Key = std::tuple<std::size_t, int>;
  struct Pair {
    const LayerRun* trad = nullptr;
    const LayerRun* bp = nullptr;
  };
  std::map<Key, Pair> pairs;
  for (const LayerRun& r : runs) {
    Pair& p = pairs[{r.catalog_index, phase_rank(r.report.phase)}];
    const LayerRun*& slot = r.report.algo == sim::Algo::traditional ? p.trad : p.bp;
    if (slot != nullptr) {
      throw MissingCounterpart("duplicate " + std::string(sim::to_string(r.report.algo)) +
                               " run for " + r.spec.name + " " +
                               std::string(sim::to_string(r.report.phase)));
    }
    slot = &r;
  }

  Aggregate agg;
  for (const auto& [key, p] : pairs) {
    if (p.trad == nullptr || p.bp == nullptr) {
      const LayerRun* have = p.trad != nullptr ? p.trad : p.bp;
      throw MissingCounterpart(have->spec.name + " " +
                               std::string(sim::to_string(have->report.phase)) + " has no " +
                               (p.trad == nullptr ? "traditional" : "bp_im2col") + " run");
    }
    agg.rows.push_back(compare(*p.trad, *p.bp));
  }

  // Networks in order of first appearance in the catalog.
  std::vector<std::pair<std::string, int>> order;
  std::map<std::pair<std::string, int>, std::vector<const ComparisonRow*>> groups;
  for (const ComparisonRow& row : agg.rows) {
    const auto key = std::make_pair(row.network, phase_rank(row.phase));
    if (groups.find(key) == groups.end()) order.push_back(key);
    groups[key].push_back(&row);
  }
  std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    const auto first = [&](const auto& k) { return groups[k].front()->catalog_index; };
    return std::make_pair(first(a), a.second) < std::make_pair(first(b), b.second);
  });

  std::vector<double> all_reductions, all_speedups;
  for (const auto& key : order) {
    const auto& members = groups[key];
    std::vector<double> speedups, buf, off;
    double sparsity_sum = 0.0;
    for (const ComparisonRow* row : members) {
      speedups.push_back(row->speedup);
      buf.push_back(row->buffer_reduction);
      off.push_back(row->offchip_reduction);
      sparsity_sum += row->sparsity;
      if (row->phase != sim::Phase::inference) {
        all_reductions.push_back(row->buffer_reduction);
        all_speedups.push_back(row->speedup);
      }
    }
    NetworkSummary s;
    s.network = key.first;
    s.phase = members.front()->phase;
    s.layers = members.size();
    s.geomean_speedup = geomean(speedups);
    s.geomean_buffer_reduction = geomean(buf);
    s.geomean_offchip_reduction = geomean(off);
    s.mean_sparsity = sparsity_sum / static_cast<double>(members.size());
    agg.networks.push_back(std::move(s));
  }
  agg.mean_buffer_reduction = geomean(all_reductions);
  agg.geomean_backprop_speedup = all_speedups.empty() ? 1.0 : geomean(all_speedups);
  return agg;
}

std::vector<LayerRun> run_sweep(const std::vector<LayerSpec>& specs,
                                const std::vector<sim::Phase>& phases,
                                const std::vector<sim::Algo>& algos, const sim::SimConfig& cfg) {
  std::vector<LayerRun> runs;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerGeometry g = specs[i].geometry();
    for (sim::Phase phase : phases)
      for (sim::Algo algo : algos)
        runs.push_back({i, specs[i], sim::run_gemm(phase, algo, g, nullptr, cfg).report});
  }
  return runs;
}

void write_comparison_csv(std::ostream& os, const std::vector<LayerRun>& runs,
                          const Aggregate& agg) {
  std::map<std::tuple<std::size_t, int>, double> speedup;
  for (const ComparisonRow& row : agg.rows)
    speedup[{row.catalog_index, phase_rank(row.phase)}] = row.speedup;

  os << "layer,phase,algo,compute_cycles,reorg_cycles,prologue_cycles,offchip_bytes,bufA_bytes,"
        "bufB_bytes,sparsity,speedup\n";
  for (const LayerRun& r : runs) {
    const sim::SimReport& rep = r.report;
    const auto it = speedup.find({r.catalog_index, phase_rank(rep.phase)});
    os << r.spec.name << ',' << sim::to_string(rep.phase) << ',' << sim::to_string(rep.algo)
       << ',' << rep.compute_cycles << ',' << rep.reorg_cycles << ',' << rep.prologue_cycles
       << ',' << rep.offchip.total() << ',' << rep.onchip.buf_a_to_pe << ','
       << rep.onchip.buf_b_to_pe << ',' << fixed(rep.operand_sparsity()) << ','
       << (it == speedup.end() ? std::string() : fixed(it->second)) << '\n';
  }
}

nlohmann::json report_to_json(const sim::SimReport& r) {
  nlohmann::json j = {
      {"phase", sim::to_string(r.phase)},
      {"algo", sim::to_string(r.algo)},
      {"compute_cycles", r.compute_cycles},
      {"stall_cycles", r.stall_cycles},
      {"reorg_cycles", r.reorg_cycles},
      {"prologue_cycles", r.prologue_cycles},
      {"total_cycles", r.total_cycles()},
      {"offchip_bytes",
       {{"to_buf_a", r.offchip.to_buf_a},
        {"to_buf_b", r.offchip.to_buf_b},
        {"writeback", r.offchip.writeback},
        {"reorg", r.offchip.reorg},
        {"total", r.offchip.total()}}},
      {"bufA_bytes", r.onchip.buf_a_to_pe},
      {"bufB_bytes", r.onchip.buf_b_to_pe},
      {"dynamic_rows", r.dynamic_rows},
      {"k_tiles", r.k_tiles},
      {"col_tiles", r.col_tiles},
      {"tile_passes", r.tile_passes},
      {"bursts_a", r.bursts_a},
      {"bursts_b", r.bursts_b},
      {"operand_elements", r.operand_elements},
      {"operand_nonzeros", r.operand_nonzeros},
      {"operand_sparsity", r.operand_sparsity()},
      {"reorg_elements", r.reorg_elements},
  };
  if (r.checksum) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(*r.checksum));
    j["checksum"] = buf;
  }
  return j;
}

nlohmann::json row_to_json(const ComparisonRow& row) {
  return {{"layer", row.layer},
          {"network", row.network},
          {"phase", sim::to_string(row.phase)},
          {"speedup", row.speedup},
          {"buffer_reduction", row.buffer_reduction},
          {"offchip_reduction", row.offchip_reduction},
          {"sparsity", row.sparsity},
          {"traditional", report_to_json(row.traditional)},
          {"bp_im2col", report_to_json(row.bp)}};
}

nlohmann::json summary_to_json(const Aggregate& agg) {
  nlohmann::json nets = nlohmann::json::array();
  for (const NetworkSummary& s : agg.networks) {
    nets.push_back({{"network", s.network},
                    {"phase", sim::to_string(s.phase)},
                    {"layers", s.layers},
                    {"geomean_speedup", s.geomean_speedup},
                    {"geomean_buffer_reduction", s.geomean_buffer_reduction},
                    {"geomean_offchip_reduction", s.geomean_offchip_reduction},
                    {"mean_sparsity", s.mean_sparsity}});
  }
  nlohmann::json layers = nlohmann::json::array();
  for (const ComparisonRow& row : agg.rows) {
    layers.push_back({{"layer", row.layer},
                      {"network", row.network},
                      {"phase", sim::to_string(row.phase)},
                      {"speedup", row.speedup},
                      {"buffer_reduction", row.buffer_reduction},
                      {"offchip_reduction", row.offchip_reduction},
                      {"sparsity", row.sparsity}});
  }
  return {{"networks", nets},
          {"layers", layers},
          {"mean_buffer_reduction", agg.mean_buffer_reduction},
          {"geomean_backprop_speedup", agg.geomean_backprop_speedup}};
}

nlohmann::json sparsity_to_json(const LayerSpec& spec, const SparsityReport& r) {
  return {{"layer", spec.name},
          {"network", spec.network},
          {"geometry", raw_geometry_to_json(spec.raw)},
          {"loss_operand_sparsity", r.loss_operand_sparsity()},
          {"grad_operand_sparsity", r.grad_operand_sparsity()},
          {"lowered_matrix_sparsity", r.lowered_matrix_sparsity()},
          {"grad_lowered_sparsity", r.grad_lowered_sparsity()}};
}

}  // namespace bpim2col::workloads
