#pragma once

// Cycle-level model of a TPU-like accelerator: a square input-stationary
// systolic array fed by double-buffered operand buffers A (dynamic) and
// B (stationary), skew FIFOs in front of the array rows, and address
// generation units that either read explicitly reorganized operands
// (traditional im2col) or map virtual lowered matrices onto the compact
// output loss (BP-im2col) with compressed bursts and crossbar recovery.
//
// Timing model, per GEMM Y = A x B with A of M rows:
//   stationary tile load   max(array_dim, port transactions) cycles, hidden
//                          behind the previous pass (double buffering)
//   tile pass              M + 2*(array_dim - 1) cycles, plus one stall cycle
//                          per extra burst a dynamic row needs
//   prologue               address-generation pipeline fill, once per GEMM
//   reorganization         host zero-space materialization (traditional only)

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bpim2col/bp_im2col.hpp"
#include "bpim2col/geometry.hpp"
#include "bpim2col/tensor.hpp"

namespace bpim2col::sim {

enum class Phase { inference, loss, gradient };
enum class Algo { traditional, bp_im2col };

std::string_view to_string(Phase phase);
std::string_view to_string(Algo algo);
Phase parse_phase(std::string_view text);  // throws ConfigError
Algo parse_algo(std::string_view text);    // accepts "bp" and "bp_im2col"

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

class MaskPayloadMismatch : public std::invalid_argument {
 public:
  explicit MaskPayloadMismatch(const std::string& what) : std::invalid_argument(what) {}
};

// Address-generation pipeline fill, in cycles.
struct PrologueLatency {
  Index trad_dynamic = 0;
  Index trad_stationary = 51;
  Index bp_dynamic_loss = 0;
  Index bp_stationary_loss = 68;
  Index bp_dynamic_grad = 68;
  Index bp_stationary_grad = 51;

  bool operator==(const PrologueLatency&) const = default;
};

// Host-side zero-space reorganization used by the traditional path: every
// element of the zero-spaced operand is written once after reading the
// compact source.
struct ReorgCostModel {
  double bytes_multiplier = 2.0;    // read + write per element
  double cycles_per_element = 1.0;
  double overlap = 0.0;             // fraction hidden behind computation, 0..1

  bool operator==(const ReorgCostModel&) const = default;
};

struct SimConfig {
  int array_dim = 16;
  int data_bytes = 4;
  int burst_overhead_bytes = 4;  // base address + lane mask per compressed burst
  PrologueLatency prologue;
  ReorgCostModel reorg;
  // Depth of one half of each double buffer, in array_dim-lane rows. The
  // dynamic operand is fetched from off-chip once when it fits in buffer A,
  // otherwise once per stationary column tile.
  Index buffer_a_depth = 65536;
  Index buffer_b_depth = 16;

  void validate() const;  // throws ConfigError

  bool operator==(const SimConfig&) const = default;
};

struct OffchipBytes {
  Index to_buf_a = 0;
  Index to_buf_b = 0;
  Index writeback = 0;
  Index reorg = 0;  // host reorganization traffic
  Index total() const { return to_buf_a + to_buf_b + writeback + reorg; }
};

struct OnchipBytes {
  Index buf_a_to_pe = 0;
  Index buf_b_to_pe = 0;
};

struct SimReport {
  Phase phase = Phase::loss;
  Algo algo = Algo::traditional;

  Index compute_cycles = 0;  // tile loads, passes and port stalls
  Index stall_cycles = 0;    // part of compute_cycles spent on extra transactions
  Index reorg_cycles = 0;    // exposed host reorganization
  Index prologue_cycles = 0;

  OffchipBytes offchip;
  OnchipBytes onchip;

  Index dynamic_rows = 0;  // M
  Index k_tiles = 0;
  Index col_tiles = 0;
  Index tile_passes = 0;
  Index bursts_a = 0;  // buffer-A port transactions
  Index bursts_b = 0;  // buffer-B port transactions

  // Structural zeros of the operand carrying the zero-spaces (matrix B for
  // inference and loss, matrix A for gradient).
  Index operand_elements = 0;
  Index operand_nonzeros = 0;
  Index reorg_elements = 0;  // zero-spaced elements materialized by the host

  std::optional<std::uint64_t> checksum;

  double operand_sparsity() const {
    return operand_elements == 0
               ? 0.0
               : 1.0 - static_cast<double>(operand_nonzeros) / static_cast<double>(operand_elements);
  }
  Index total_cycles() const { return compute_cycles + prologue_cycles + reorg_cycles; }

  // Bytes through the port of the buffer holding the zero-spaced operand.
  Index sparse_operand_port_bytes() const {
    return phase == Phase::gradient ? onchip.buf_a_to_pe : onchip.buf_b_to_pe;
  }
};

// Tensors consumed by a phase:
//   inference: input, kernel        -> output      [B, N, H_o, W_o]
//   loss:      d_out, kernel        -> input loss  [B, C, H_i, W_i]
//   gradient:  input, d_out         -> kernel grad [N, C, K_h, K_w]
struct Operands {
  const Tensor4D* input = nullptr;
  const Tensor4D* kernel = nullptr;
  const Tensor4D* d_out = nullptr;
};

struct RunResult {
  SimReport report;
  std::optional<Tensor4D> result;
};

// Without operands the run is timing-only: address generation, traffic and
// cycles are modeled exactly but no arithmetic is performed.
RunResult run_gemm(Phase phase, Algo algo, const LayerGeometry& g, const Operands* operands,
                   const SimConfig& cfg);

// Scatters a burst payload back onto its lanes; lanes outside the mask are
// left untouched. Throws MaskPayloadMismatch if payload.size() != count or the
// count disagrees with the mask.
void crossbar_recover(const CompressedBurst& burst, std::span<const Scalar> payload,
                      std::span<Scalar> lanes);

// Input-stationary PE array with skew FIFOs. PE (r, c) holds stationary
// element (r, c); dynamic lane r enters row r through a FIFO of depth r and
// partial sums flow down the columns.
class PEArray {
 public:
  explicit PEArray(int dim);

  int dim() const { return dim_; }

  // dim*dim row-major tile.
  void load_stationary(std::span<const Scalar> tile);

  // Streams `rows` dynamic rows of dim lanes through the array. fetch(m, lanes)
  // fills row m. Column sums of row m are added to acc[m*dim + c].
  // Returns the number of cycles, rows + 2*(dim-1).
  template <typename Fetch>
  Index stream(Index rows, Fetch&& fetch, std::span<Scalar> acc);

  int fifo_depth(int lane) const { return lane; }

 private:
  void clear_pipeline();
  void step(std::span<const Scalar> feed);

  int dim_;
  std::vector<Scalar> stationary_;
  std::vector<Scalar> a_reg_, a_next_;
  std::vector<Scalar> psum_, psum_next_;
  // Ring buffer per lane: lane r delays by r cycles.
  std::vector<std::vector<Scalar>> fifo_;
  std::vector<int> fifo_head_;
  std::vector<Scalar> fifo_out_;
};

template <typename Fetch>
Index PEArray::stream(Index rows, Fetch&& fetch, std::span<Scalar> acc) {
  clear_pipeline();
  const Index cycles = rows + 2 * (dim_ - 1);
  std::vector<Scalar> feed(static_cast<std::size_t>(dim_));
  const std::size_t bottom = static_cast<std::size_t>(dim_ - 1) * static_cast<std::size_t>(dim_);
  for (Index t = 0; t < cycles; ++t) {
    if (t < rows) {
      fetch(t, std::span<Scalar>(feed));
    } else {
      std::fill(feed.begin(), feed.end(), Scalar{0});
    }
    step(feed);
    // Row m leaves the bottom of column c at cycle m + (dim-1) + c.
    for (int c = 0; c < dim_; ++c) {
      const Index m = t - (dim_ - 1) - c;
      if (m >= 0 && m < rows) {
        acc[static_cast<std::size_t>(m * dim_ + c)] += psum_[bottom + static_cast<std::size_t>(c)];
      }
    }
  }
  return cycles;
}

}  // namespace bpim2col::sim
