#pragma once

// Layer catalog, structural sparsity analytics and aggregation of simulator
// reports into traditional-vs-BP-im2col comparisons.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpim2col/geometry.hpp"
#include "bpim2col/systolic_sim.hpp"
#include "bpim2col/tensor.hpp"

namespace bpim2col::workloads {

inline constexpr Index kCatalogBatch = 2;

struct LayerSpec {
  std::string name;
  RawGeometry raw;
  std::string network;

  LayerGeometry geometry() const { return LayerGeometry::derive(raw); }
  bool operator==(const LayerSpec&) const = default;
};

// Five reference layers (tag "table2"), followed by the stride>=2 convolutions
// of several reference networks, all at batch 2. The networks other than
// AlexNet, ResNet-50 and SqueezeNet are stand-ins.
std::vector<LayerSpec> builtin_catalog();

// Only the five comparison-table layers (network tag "table2").
std::vector<LayerSpec> table2_layers();

// Accepts either a single layer object, an array of them, or
// {"layers": [...]}. Missing names fall back to the shorthand; a missing
// network tag becomes "custom".
std::vector<LayerSpec> layers_from_json(const nlohmann::json& j, Index default_batch);

LayerSpec layer_from_shorthand(const std::string& text, Index batch);

// Caps spatial extent and channel counts while keeping kernel, stride and
// padding. Padding and kernel still fit because K <= H + 2P is preserved by
// clamping the extent to at least K - 2P.
LayerSpec shrink(const LayerSpec& spec, Index max_extent, Index max_channels);

// Seeded small-integer tensors, values in [-3, 3], so every GEMM is exact in
// single precision.
struct SyntheticOperands {
  Tensor4D input;
  Tensor4D kernel;
  Tensor4D d_out;

  sim::Operands view() const { return {&input, &kernel, &d_out}; }
};

SyntheticOperands make_operands(const LayerGeometry& g, std::uint64_t seed);

// Structural zero counts. "map" quantities are per materialized operand,
// "lowered" quantities are over the full virtual matrix.
struct ZeroCount {
  Index zeros = 0;
  Index total = 0;

  double fraction() const {
    return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
  }
  bool operator==(const ZeroCount&) const = default;
};

struct SparsityReport {
  ZeroCount loss_map;       // zero-spaced output loss
  ZeroCount grad_map;       // zero-inserted output loss
  ZeroCount loss_lowered;   // stationary matrix of the loss GEMM
  ZeroCount grad_lowered;   // dynamic matrix of the gradient GEMM

  double loss_operand_sparsity() const { return loss_map.fraction(); }
  double grad_operand_sparsity() const { return grad_map.fraction(); }
  double lowered_matrix_sparsity() const { return loss_lowered.fraction(); }
  double grad_lowered_sparsity() const { return grad_lowered.fraction(); }

  bool operator==(const SparsityReport&) const = default;
};

// Counts from the zero predicates of the implicit mapping.
SparsityReport sparsity_report(const LayerSpec& spec);

// Same counts by materializing one (batch, channel) plane with the reference
// lowering and scaling by B*N.
SparsityReport sparsity_report_materialized(const LayerSpec& spec);

class MissingCounterpart : public std::runtime_error {
 public:
  explicit MissingCounterpart(const std::string& what) : std::runtime_error(what) {}
};

// One simulated (layer, phase, algo) point. catalog_index orders output.
struct LayerRun {
  std::size_t catalog_index = 0;
  LayerSpec spec;
  sim::SimReport report;
};

struct ComparisonRow {
  std::size_t catalog_index = 0;
  std::string layer;
  std::string network;
  sim::Phase phase = sim::Phase::loss;
  sim::SimReport traditional;
  sim::SimReport bp;

  double speedup = 1.0;            // traditional total / bp total
  double buffer_reduction = 0.0;   // on the port of the zero-spaced operand
  double offchip_reduction = 0.0;
  double sparsity = 0.0;           // of the zero-spaced operand
};

struct NetworkSummary {
  std::string network;
  sim::Phase phase = sim::Phase::loss;
  std::size_t layers = 0;
  double geomean_speedup = 1.0;
  double geomean_buffer_reduction = 0.0;
  double geomean_offchip_reduction = 0.0;
  double mean_sparsity = 0.0;
};

struct Aggregate {
  std::vector<ComparisonRow> rows;        // catalog order, then phase
  std::vector<NetworkSummary> networks;   // first-appearance order, then phase
  double mean_buffer_reduction = 0.0;     // geometric, over backprop rows
  double geomean_backprop_speedup = 1.0;
};

ComparisonRow compare(const LayerRun& traditional, const LayerRun& bp);

// Pairs traditional and BP-im2col runs of every (layer, phase). The result
// does not depend on the order of `runs`. Throws MissingCounterpart when a
// point lacks its partner or appears twice.
Aggregate aggregate(const std::vector<LayerRun>& runs);

// Timing-only simulation of every (layer, phase, algo), in catalog order.
std::vector<LayerRun> run_sweep(const std::vector<LayerSpec>& specs,
                                const std::vector<sim::Phase>& phases,
                                const std::vector<sim::Algo>& algos, const sim::SimConfig& cfg);

// comparison.csv: one line per run, header first.
void write_comparison_csv(std::ostream& os, const std::vector<LayerRun>& runs,
                          const Aggregate& agg);

nlohmann::json report_to_json(const sim::SimReport& report);
nlohmann::json row_to_json(const ComparisonRow& row);
nlohmann::json summary_to_json(const Aggregate& agg);
nlohmann::json sparsity_to_json(const LayerSpec& spec, const SparsityReport& report);

}  // namespace bpim2col::workloads
