#include "bpim2col/systolic_sim.hpp"

#include <bit>
#include <cmath>
#include <functional>
#include <memory>

namespace bpim2col::sim {
namespace {

Index ceil_div(Index a, Index b) { return (a + b - 1) / b; }

// Port transaction statistics of one row segment.
struct PortFetch {
  int bursts = 0;
  int payload = 0;
};

// A lowered operand as seen by the buffer port that feeds the array.
class OperandPort {
 public:
  OperandPort(Index rows, Index cols) : rows_(rows), cols_(cols) {}
  virtual ~OperandPort() = default;

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  // True when zero lanes are dropped and bursts carry address overhead.
  virtual bool compressed() const = 0;
  virtual PortFetch scan(Index row, Index col_base, int lanes) const = 0;
  // Writes the segment into `lanes` (already zeroed by the caller).
  virtual PortFetch fetch(Index row, Index col_base, std::span<Scalar> lanes) const = 0;

 private:
  Index rows_, cols_;
};

// Operand read in full, structural zeros included, one transaction per row
// segment.
class DensePort final : public OperandPort {
 public:
  using Element = std::function<Scalar(Index, Index)>;

  DensePort(Index rows, Index cols, Element element)
      : OperandPort(rows, cols), element_(std::move(element)) {}

  bool compressed() const override { return false; }

  PortFetch scan(Index /*row*/, Index col_base, int lanes) const override {
    const auto valid = static_cast<int>(std::min<Index>(lanes, cols() - col_base));
    return {valid > 0 ? 1 : 0, valid};
  }

  PortFetch fetch(Index row, Index col_base, std::span<Scalar> lanes) const override {
    const PortFetch f = scan(row, col_base, static_cast<int>(lanes.size()));
    for (int i = 0; i < f.payload; ++i) lanes[static_cast<std::size_t>(i)] = element_(row, col_base + i);
    return f;
  }

 private:
  Element element_;
};

// Implicit zero-spaced operand: address generation maps each lane onto the
// compact output loss, only stored lanes cross the port, and the crossbar
// restores the lane layout.
class ImplicitLossPort final : public OperandPort {
 public:
  enum class Mode { transposed, dilated };

  ImplicitLossPort(Mode mode, const LayerGeometry& g, const Tensor4D* d_out)
      : OperandPort(mode == Mode::transposed ? transposed_rows(g) : dilated_rows(g),
                    mode == Mode::transposed ? transposed_cols(g) : dilated_cols(g)),
        mode_(mode),
        g_(g),
        d_out_(d_out) {}

  bool compressed() const override { return true; }

  PortFetch scan(Index row, Index col_base, int lanes) const override {
    const RowScan s = mode_ == Mode::transposed ? scan_row_transposed(row, col_base, g_, lanes)
                                                : scan_row_dilated(row, col_base, g_, lanes);
    return {s.bursts, s.payload};
  }

  PortFetch fetch(Index row, Index col_base, std::span<Scalar> lanes) const override {
    const int n = static_cast<int>(lanes.size());
    const GatheredRow gr = mode_ == Mode::transposed
                               ? gather_row_transposed(row, col_base, g_, *d_out_, n)
                               : gather_row_dilated(row, col_base, g_, *d_out_, n);
    PortFetch f;
    const auto stored = d_out_->data();
    for (const CompressedBurst& burst : gr.bursts) {
      crossbar_recover(burst,
                       stored.subspan(static_cast<std::size_t>(burst.base),
                                      static_cast<std::size_t>(burst.count)),
                       lanes);
      ++f.bursts;
      f.payload += burst.count;
    }
    return f;
  }

 private:
  Mode mode_;
  const LayerGeometry& g_;
  const Tensor4D* d_out_;
};

// Host-side zero-space reorganization: scatter the compact loss into a zeroed
// map at (top + p*S, left + q*S).
Tensor4D reorganize_zero_spaces(const Tensor4D& d_out, Index top, Index left, Index height,
                                Index width, Index stride) {
  Tensor4D map({d_out.dim(0), d_out.dim(1), height, width});
  for (Index b = 0; b < d_out.dim(0); ++b)
    for (Index n = 0; n < d_out.dim(1); ++n)
      for (Index p = 0; p < d_out.dim(2); ++p)
        for (Index q = 0; q < d_out.dim(3); ++q)
          map(b, n, top + p * stride, left + q * stride) = d_out(b, n, p, q);
  return map;
}

Scalar padded_read(const Tensor4D& t, Index b, Index c, Index y, Index x) {
  if (y < 0 || x < 0 || y >= t.dim(2) || x >= t.dim(3)) return 0;
  return t(b, c, y, x);
}

// Structural non-zeros of the inference im2col operand (padding excluded).
Index inference_nonzeros(const LayerGeometry& g) {
  Index rows = 0, cols = 0;
  for (Index u = 0; u < g.kernel_h(); ++u)
    for (Index p = 0; p < g.out_height(); ++p) {
      const Index y = p * g.stride() + u - g.pad_h();
      rows += (y >= 0 && y < g.in_height());
    }
  for (Index v = 0; v < g.kernel_w(); ++v)
    for (Index q = 0; q < g.out_width(); ++q) {
      const Index x = q * g.stride() + v - g.pad_w();
      cols += (x >= 0 && x < g.in_width());
    }
  return g.in_channels() * g.batch() * rows * cols;
}

bool loss_needs_reorg(const LayerGeometry& g) {
  return g.stride() > 1 || g.loss_pad_h() > 0 || g.loss_pad_w() > 0 || g.rem_h() > 0 ||
         g.rem_w() > 0;
}

// Everything a GEMM run needs: the two operand ports, which of them carries
// the zero-spaces, and the phase-specific bookkeeping.
struct GemmPlan {
  std::unique_ptr<OperandPort> a;  // dynamic, M x K
  std::unique_ptr<OperandPort> b;  // stationary, K x cols
  bool sparse_is_a = false;
  Index operand_nonzeros = 0;
  Index reorg_elements = 0;
  Index prologue = 0;
  // Host-reorganized operand kept alive for the dense port reading it.
  std::shared_ptr<Tensor4D> reorganized;
};

void require_operand(const Tensor4D* t, const Dims4& dims, const char* role) {
  if (t == nullptr) throw ShapeMismatch(std::string("missing operand: ") + role);
  expect_dims(*t, dims, role);
}

GemmPlan make_plan(Phase phase, Algo algo, const LayerGeometry& g, const Operands* ops,
                   const SimConfig& cfg) {
  GemmPlan plan;
  const Index Kh = g.kernel_h(), Kw = g.kernel_w();
  const auto& pro = cfg.prologue;
  const bool functional = ops != nullptr;

  switch (phase) {
    case Phase::inference: {
      const Tensor4D* input = functional ? ops->input : nullptr;
      const Tensor4D* kernel = functional ? ops->kernel : nullptr;
      if (functional) {
        require_operand(input, input_dims(g), "input");
        require_operand(kernel, kernel_dims(g), "kernel");
      }
      const Index ckk = g.in_channels() * Kh * Kw;
      plan.a = std::make_unique<DensePort>(g.out_channels(), ckk, [kernel, ckk](Index n, Index i) {
        return kernel->at_flat(n * ckk + i);
      });
      const Index Ho = g.out_height(), Wo = g.out_width();
      plan.b = std::make_unique<DensePort>(
          ckk, g.batch() * Ho * Wo, [input, &g, Kh, Kw, Ho, Wo](Index r, Index col) {
            const Index c = r / (Kh * Kw), u = (r / Kw) % Kh, v = r % Kw;
            const Index b = col / (Ho * Wo), p = (col / Wo) % Ho, q = col % Wo;
            return padded_read(*input, b, c, p * g.stride() + u - g.pad_h(),
                               q * g.stride() + v - g.pad_w());
          });
      plan.operand_nonzeros = inference_nonzeros(g);
      plan.prologue = pro.trad_dynamic + pro.trad_stationary;
      break;
    }
    case Phase::loss: {
      const Tensor4D* d_out = functional ? ops->d_out : nullptr;
      const Tensor4D* kernel = functional ? ops->kernel : nullptr;
      if (functional) {
        require_operand(d_out, output_dims(g), "output loss");
        require_operand(kernel, kernel_dims(g), "kernel");
      }
      // Rotated, transposed kernel is produced by the dynamic address
      // generator's index order; no data movement.
      plan.a = std::make_unique<DensePort>(
          g.in_channels(), g.out_channels() * Kh * Kw, [kernel, Kh, Kw](Index c, Index i) {
            const Index n = i / (Kh * Kw), hk = (i / Kw) % Kh, wk = i % Kw;
            return (*kernel)(n, c, Kh - 1 - hk, Kw - 1 - wk);
          });
      if (algo == Algo::bp_im2col) {
        plan.b = std::make_unique<ImplicitLossPort>(ImplicitLossPort::Mode::transposed, g, d_out);
        plan.prologue = pro.bp_dynamic_loss + pro.bp_stationary_loss;
      } else {
        const Index mh = g.loss_map_height(), mw = g.loss_map_width();
        if (functional) {
          plan.reorganized = std::make_shared<Tensor4D>(reorganize_zero_spaces(
              *d_out, g.loss_pad_h(), g.loss_pad_w(), mh, mw, g.stride()));
        }
        const Index Hi = g.in_height(), Wi = g.in_width();
        plan.b = std::make_unique<DensePort>(
            transposed_rows(g), transposed_cols(g),
            [map = plan.reorganized.get(), Kh, Kw, Hi, Wi](Index r, Index col) {
              const Index n = r / (Kh * Kw), hk = (r / Kw) % Kh, wk = r % Kw;
              const Index b = col / (Hi * Wi), y = (col / Wi) % Hi, x = col % Wi;
              return (*map)(b, n, y + hk, x + wk);
            });
        plan.prologue = pro.trad_dynamic + pro.trad_stationary;
        if (loss_needs_reorg(g)) plan.reorg_elements = g.batch() * g.out_channels() * mh * mw;
      }
      plan.operand_nonzeros = transposed_nonzeros(g);
      break;
    }
    case Phase::gradient: {
      const Tensor4D* input = functional ? ops->input : nullptr;
      const Tensor4D* d_out = functional ? ops->d_out : nullptr;
      if (functional) {
        require_operand(input, input_dims(g), "input");
        require_operand(d_out, output_dims(g), "output loss");
      }
      const Index Hd = g.dilated_height(), Wd = g.dilated_width();
      if (algo == Algo::bp_im2col) {
        plan.a = std::make_unique<ImplicitLossPort>(ImplicitLossPort::Mode::dilated, g, d_out);
        plan.prologue = pro.bp_dynamic_grad + pro.bp_stationary_grad;
      } else {
        if (functional) {
          plan.reorganized =
              std::make_shared<Tensor4D>(reorganize_zero_spaces(*d_out, 0, 0, Hd, Wd, g.stride()));
        }
        plan.a = std::make_unique<DensePort>(
            dilated_rows(g), dilated_cols(g),
            [map = plan.reorganized.get(), Hd, Wd](Index n, Index col) {
              const Index b = col / (Hd * Wd), y = (col / Wd) % Hd, x = col % Wd;
              return (*map)(b, n, y, x);
            });
        plan.prologue = pro.trad_dynamic + pro.trad_stationary;
        if (g.stride() > 1) plan.reorg_elements = g.batch() * g.out_channels() * Hd * Wd;
      }
      // Stationary operand: im2col of the padded input with H_o'' x W_o''
      // windows, read in place by the stationary address generator.
      plan.b = std::make_unique<DensePort>(
          dilated_cols(g), g.in_channels() * Kh * Kw,
          [input, &g, Kh, Kw, Hd, Wd](Index r, Index col) {
            const Index b = r / (Hd * Wd), y = (r / Wd) % Hd, x = r % Wd;
            const Index c = col / (Kh * Kw), u = (col / Kw) % Kh, v = col % Kw;
            return padded_read(*input, b, c, y + u - g.pad_h(), x + v - g.pad_w());
          });
      plan.sparse_is_a = true;
      plan.operand_nonzeros = dilated_nonzeros(g);
      break;
    }
  }
  return plan;
}

// Writes GEMM output Y (M x cols, row-major) into the phase's result layout.
Tensor4D shape_result(Phase phase, const LayerGeometry& g, const std::vector<Scalar>& y) {
  switch (phase) {
    case Phase::inference: {
      Tensor4D out(output_dims(g));
      const Index plane = g.out_height() * g.out_width();
      const Index cols = g.batch() * plane;
      for (Index b = 0; b < g.batch(); ++b)
        for (Index n = 0; n < g.out_channels(); ++n)
          for (Index i = 0; i < plane; ++i)
            out.at_flat((b * g.out_channels() + n) * plane + i) =
                y[static_cast<std::size_t>(n * cols + b * plane + i)];
      return out;
    }
    case Phase::loss: {
      Tensor4D out(input_dims(g));
      const Index plane = g.in_height() * g.in_width();
      const Index cols = g.batch() * plane;
      for (Index b = 0; b < g.batch(); ++b)
        for (Index c = 0; c < g.in_channels(); ++c)
          for (Index i = 0; i < plane; ++i)
            out.at_flat((b * g.in_channels() + c) * plane + i) =
                y[static_cast<std::size_t>(c * cols + b * plane + i)];
      return out;
    }
    case Phase::gradient: {
      Tensor4D out(kernel_dims(g));
      std::copy(y.begin(), y.end(), out.data().begin());
      return out;
    }
  }
  throw ConfigError("unknown phase");
}

struct TileLoad {
  Index cycles = 0;
  Index payload = 0;
  Index bursts = 0;
};

TileLoad scan_stationary_tile(const OperandPort& port, Index kt, Index jt, int dim) {
  TileLoad t;
  for (int r = 0; r < dim; ++r) {
    const Index row = kt * dim + r;
    Index transactions = 0;
    if (row < port.rows()) {
      const PortFetch f = port.scan(row, jt * dim, dim);
      t.payload += f.payload;
      t.bursts += f.bursts;
      transactions = f.bursts;
    }
    // a row without stored lanes still takes one shift cycle
    t.cycles += std::max<Index>(1, transactions);
  }
  return t;
}

struct DynamicSlab {
  Index payload = 0;
  Index bursts = 0;
  Index stalls = 0;
};

}  // namespace

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::inference: return "inference";
    case Phase::loss: return "loss";
    case Phase::gradient: return "gradient";
  }
  return "?";
}

std::string_view to_string(Algo algo) {
  return algo == Algo::traditional ? "traditional" : "bp_im2col";
}

Phase parse_phase(std::string_view text) {
  if (text == "inference") return Phase::inference;
  if (text == "loss") return Phase::loss;
  if (text == "gradient") return Phase::gradient;
  throw ConfigError("unknown phase '" + std::string(text) + "'");
}

Algo parse_algo(std::string_view text) {
  if (text == "traditional") return Algo::traditional;
  if (text == "bp" || text == "bp_im2col") return Algo::bp_im2col;
  throw ConfigError("unknown algorithm '" + std::string(text) + "'");
}

void SimConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid simulator config: " + what); };
  if (array_dim < 1 || array_dim > kMaxLanes) {
    fail("array_dim must be in 1.." + std::to_string(kMaxLanes));
  }
  if (data_bytes < 1) fail("data_bytes must be >= 1");
  if (burst_overhead_bytes < 0) fail("burst_overhead_bytes must be >= 0");
  for (Index p : {prologue.trad_dynamic, prologue.trad_stationary, prologue.bp_dynamic_loss,
                  prologue.bp_stationary_loss, prologue.bp_dynamic_grad,
                  prologue.bp_stationary_grad}) {
    if (p < 0) fail("prologue latencies must be >= 0");
  }
  if (!(reorg.bytes_multiplier >= 0) || !(reorg.cycles_per_element >= 0)) {
    fail("reorganization costs must be >= 0");
  }
  if (!(reorg.overlap >= 0 && reorg.overlap <= 1)) fail("overlap must be in [0, 1]");
  if (buffer_a_depth < 1) fail("buffer_a_depth must be >= 1");
  if (buffer_b_depth < array_dim) fail("buffer_b_depth must hold one stationary tile");
}

void crossbar_recover(const CompressedBurst& burst, std::span<const Scalar> payload,
                      std::span<Scalar> lanes) {
  if (static_cast<int>(payload.size()) != burst.count ||
      std::popcount(burst.mask) != burst.count) {
    throw MaskPayloadMismatch("burst mask holds " + std::to_string(std::popcount(burst.mask)) +
                              " lanes, count " + std::to_string(burst.count) + ", payload " +
                              std::to_string(payload.size()));
  }
  if (lanes.size() < 64 && (burst.mask >> lanes.size()) != 0) {
    throw MaskPayloadMismatch("burst mask addresses lanes beyond " + std::to_string(lanes.size()));
  }
  std::size_t next = 0;
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    if ((burst.mask >> i) & 1U) lanes[i] = payload[next++];
  }
}

PEArray::PEArray(int dim) : dim_(dim) {
  if (dim < 1) throw ConfigError("PE array dimension must be >= 1");
  const auto cells = static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim);
  stationary_.assign(cells, 0);
  a_reg_.assign(cells, 0);
  a_next_.assign(cells, 0);
  psum_.assign(cells, 0);
  psum_next_.assign(cells, 0);
  fifo_.resize(static_cast<std::size_t>(dim));
  for (int r = 0; r < dim; ++r) fifo_[static_cast<std::size_t>(r)].assign(static_cast<std::size_t>(r), 0);
  fifo_head_.assign(static_cast<std::size_t>(dim), 0);
  fifo_out_.assign(static_cast<std::size_t>(dim), 0);
}

void PEArray::load_stationary(std::span<const Scalar> tile) {
  if (tile.size() != stationary_.size()) throw ShapeMismatch("stationary tile size mismatch");
  std::copy(tile.begin(), tile.end(), stationary_.begin());
}

void PEArray::clear_pipeline() {
  std::fill(a_reg_.begin(), a_reg_.end(), Scalar{0});
  std::fill(psum_.begin(), psum_.end(), Scalar{0});
  for (auto& f : fifo_) std::fill(f.begin(), f.end(), Scalar{0});
  std::fill(fifo_head_.begin(), fifo_head_.end(), 0);
}

void PEArray::step(std::span<const Scalar> feed) {
  const auto d = static_cast<std::size_t>(dim_);
  // Skew FIFOs: lane r emerges r cycles after it was pushed.
  for (std::size_t r = 0; r < d; ++r) {
    auto& ring = fifo_[r];
    if (ring.empty()) {
      fifo_out_[r] = feed[r];
      continue;
    }
    auto& head = fifo_head_[r];
    fifo_out_[r] = ring[static_cast<std::size_t>(head)];
    ring[static_cast<std::size_t>(head)] = feed[r];
    head = (head + 1) % static_cast<int>(ring.size());
  }
  for (std::size_t r = 0; r < d; ++r) {
    const Scalar* a_prev = &a_reg_[r * d];
    Scalar* a_out = &a_next_[r * d];
    const Scalar* w = &stationary_[r * d];
    Scalar* p_out = &psum_next_[r * d];
    a_out[0] = fifo_out_[r];
    for (std::size_t c = 1; c < d; ++c) a_out[c] = a_prev[c - 1];
    if (r == 0) {
      for (std::size_t c = 0; c < d; ++c) p_out[c] = a_out[c] * w[c];
    } else {
      const Scalar* p_in = &psum_[(r - 1) * d];
      for (std::size_t c = 0; c < d; ++c) p_out[c] = p_in[c] + a_out[c] * w[c];
    }
  }
  a_reg_.swap(a_next_);
  psum_.swap(psum_next_);
}

RunResult run_gemm(Phase phase, Algo algo, const LayerGeometry& g, const Operands* operands,
                   const SimConfig& cfg) {
  cfg.validate();
  GemmPlan plan = make_plan(phase, algo, g, operands, cfg);
  const OperandPort& A = *plan.a;
  const OperandPort& B = *plan.b;
  if (A.cols() != B.rows()) throw ShapeMismatch("GEMM operands disagree on the inner dimension");

  const int dim = cfg.array_dim;
  const Index M = A.rows();
  const Index n_kt = ceil_div(A.cols(), dim);
  const Index n_jt = ceil_div(B.cols(), dim);
  const Index base_pass = M + 2 * static_cast<Index>(dim - 1);

  SimReport rep;
  rep.phase = phase;
  rep.algo = algo;
  rep.dynamic_rows = M;
  rep.k_tiles = n_kt;
  rep.col_tiles = n_jt;
  rep.tile_passes = n_kt * n_jt;

  // Dynamic row blocks are identical for every column tile; scan them once.
  std::vector<DynamicSlab> slabs(static_cast<std::size_t>(n_kt));
  for (Index kt = 0; kt < n_kt; ++kt) {
    DynamicSlab& s = slabs[static_cast<std::size_t>(kt)];
    for (Index m = 0; m < M; ++m) {
      const PortFetch f = A.scan(m, kt * dim, dim);
      s.payload += f.payload;
      s.bursts += f.bursts;
      s.stalls += std::max(0, f.bursts - 1);
    }
  }

  // Cycle accounting. Loop order: column tiles outer, k tiles inner; the next
  // stationary tile loads while the current one is streamed.
  Index cycles = 0;
  Index stalls = 0;
  Index sparse_b_payload = 0;
  TileLoad current = scan_stationary_tile(B, 0, 0, dim);
  cycles += current.cycles;
  for (Index i = 0; i < rep.tile_passes; ++i) {
    const Index kt = i % n_kt;
    rep.onchip.buf_b_to_pe += current.payload * cfg.data_bytes;
    rep.bursts_b += current.bursts;
    sparse_b_payload += current.payload;
    const Index pass = base_pass + slabs[static_cast<std::size_t>(kt)].stalls;
    Index next_load = 0;
    if (i + 1 < rep.tile_passes) {
      const TileLoad next = scan_stationary_tile(B, (i + 1) % n_kt, (i + 1) / n_kt, dim);
      next_load = next.cycles;
      current = next;
    }
    const Index step = std::max(pass, next_load);
    stalls += step - base_pass;
    cycles += step;
  }
  rep.compute_cycles = cycles;
  rep.stall_cycles = stalls;
  rep.prologue_cycles = plan.prologue;

  Index slab_payload = 0, slab_bursts = 0;
  for (const DynamicSlab& s : slabs) {
    slab_payload += s.payload;
    slab_bursts += s.bursts;
  }
  rep.onchip.buf_a_to_pe = n_jt * slab_payload * cfg.data_bytes;
  rep.bursts_a = n_jt * slab_bursts;

  const Index a_fetches = (M * n_kt <= cfg.buffer_a_depth) ? 1 : n_jt;
  const Index a_overhead = A.compressed() ? slab_bursts * cfg.burst_overhead_bytes : 0;
  rep.offchip.to_buf_a = a_fetches * (slab_payload * cfg.data_bytes + a_overhead);
  const Index b_overhead = B.compressed() ? rep.bursts_b * cfg.burst_overhead_bytes : 0;
  rep.offchip.to_buf_b = rep.onchip.buf_b_to_pe + b_overhead;
  rep.offchip.writeback = M * B.cols() * cfg.data_bytes;

  rep.reorg_elements = plan.reorg_elements;
  rep.offchip.reorg = std::llround(static_cast<double>(plan.reorg_elements) * cfg.data_bytes *
                                   cfg.reorg.bytes_multiplier);
  rep.reorg_cycles = std::llround(static_cast<double>(plan.reorg_elements) *
                                  cfg.reorg.cycles_per_element * (1.0 - cfg.reorg.overlap));

  rep.operand_elements = plan.sparse_is_a ? A.rows() * A.cols() : B.rows() * B.cols();
  // Compressed ports measure stored lanes directly; dense ports read zeros
  // too, so fall back to the structural count.
  if (plan.sparse_is_a && A.compressed()) {
    rep.operand_nonzeros = slab_payload;
  } else if (!plan.sparse_is_a && B.compressed()) {
    rep.operand_nonzeros = sparse_b_payload;
  } else {
    rep.operand_nonzeros = plan.operand_nonzeros;
  }

  RunResult result;
  if (operands != nullptr) {
    PEArray pe(dim);
    const auto d = static_cast<std::size_t>(dim);
    std::vector<Scalar> y(static_cast<std::size_t>(M * B.cols()), 0);
    std::vector<Scalar> tile(d * d);
    std::vector<Scalar> acc(static_cast<std::size_t>(M) * d);
    for (Index jt = 0; jt < n_jt; ++jt) {
      std::fill(acc.begin(), acc.end(), Scalar{0});
      for (Index kt = 0; kt < n_kt; ++kt) {
        std::fill(tile.begin(), tile.end(), Scalar{0});
        for (std::size_t r = 0; r < d; ++r) {
          const Index row = kt * dim + static_cast<Index>(r);
          if (row < B.rows()) B.fetch(row, jt * dim, std::span<Scalar>(tile).subspan(r * d, d));
        }
        pe.load_stationary(tile);
        const Index elapsed = pe.stream(
            M,
            [&](Index m, std::span<Scalar> lanes) {
              std::fill(lanes.begin(), lanes.end(), Scalar{0});
              A.fetch(m, kt * dim, lanes);
            },
            std::span<Scalar>(acc));
        if (elapsed != base_pass) throw ConfigError("PE array pass length diverged from model");
      }
      const Index width = std::min<Index>(dim, B.cols() - jt * dim);
      for (Index m = 0; m < M; ++m)
        for (Index c = 0; c < width; ++c)
          y[static_cast<std::size_t>(m * B.cols() + jt * dim + c)] =
              acc[static_cast<std::size_t>(m * dim + c)];
    }
    result.result = shape_result(phase, g, y);
    rep.checksum = checksum(result.result->data());
  }
  result.report = rep;
  return result;
}

}  // namespace bpim2col::sim
