#include <bit>
#include <random>

#include <catch_amalgamated.hpp>

#include "bpim2col/systolic_sim.hpp"
#include "bpim2col/tensor_ref.hpp"
#include "bpim2col/verify.hpp"
#include "support/oracle.hpp"

using namespace bpim2col;
using sim::Algo;
using sim::Phase;

namespace {

LayerGeometry layer(const char* s, Index batch = 2) {
  return LayerGeometry::derive(parse_layer_shorthand(s, batch));
}

struct Ops {
  Tensor4D input, kernel, d_out;
  explicit Ops(const LayerGeometry& g, std::uint64_t seed)
      : input(input_dims(g)), kernel(kernel_dims(g)), d_out(output_dims(g)) {
    oracle::fill_small_ints(input, seed);
    oracle::fill_small_ints(kernel, seed + 1);
    oracle::fill_small_ints(d_out, seed + 2);
  }
  sim::Operands view() const { return {&input, &kernel, &d_out}; }
};

}  // namespace

TEST_CASE("prologue defaults") {
  const sim::SimConfig cfg;
  CHECK(cfg.prologue.trad_dynamic == 0);
  CHECK(cfg.prologue.trad_stationary == 51);
  CHECK(cfg.prologue.bp_dynamic_loss == 0);
  CHECK(cfg.prologue.bp_stationary_loss == 68);
  CHECK(cfg.prologue.bp_dynamic_grad == 68);
  CHECK(cfg.prologue.bp_stationary_grad == 51);
  CHECK(cfg.array_dim == 16);
  CHECK(cfg.data_bytes == 4);

  const LayerGeometry g = layer("112/64/64/3/2/1");
  CHECK(sim::run_gemm(Phase::loss, Algo::bp_im2col, g, nullptr, cfg).report.prologue_cycles == 68);
  CHECK(sim::run_gemm(Phase::loss, Algo::traditional, g, nullptr, cfg).report.prologue_cycles == 51);
  CHECK(sim::run_gemm(Phase::gradient, Algo::bp_im2col, g, nullptr, cfg).report.prologue_cycles ==
        68 + 51);
}

TEST_CASE("config validation") {
  sim::SimConfig cfg;
  cfg.array_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), sim::ConfigError);
  cfg = {};
  cfg.array_dim = 65;
  CHECK_THROWS_AS(cfg.validate(), sim::ConfigError);
  cfg = {};
  cfg.prologue.bp_dynamic_grad = -1;
  CHECK_THROWS_AS(cfg.validate(), sim::ConfigError);
  cfg = {};
  cfg.reorg.overlap = 1.5;
  CHECK_THROWS_AS(cfg.validate(), sim::ConfigError);
  CHECK_THROWS_AS(sim::parse_phase("backward"), sim::ConfigError);
  CHECK(sim::parse_algo("bp") == Algo::bp_im2col);
  CHECK(sim::parse_algo("traditional") == Algo::traditional);
  CHECK_THROWS_AS(sim::parse_algo("sparse"), sim::ConfigError);
}

TEST_CASE("PE array pass length and arithmetic") {
  sim::PEArray pe(16);
  for (int lane = 0; lane < 16; ++lane) CHECK(pe.fifo_depth(lane) == lane);

  std::mt19937_64 rng(3);
  for (int dim : {1, 3, 16}) {
    sim::PEArray arr(dim);
    for (Index M : {Index{1}, Index{5}, Index{16}, Index{37}}) {
      const auto d = static_cast<std::size_t>(dim);
      std::vector<Scalar> w(d * d), a(static_cast<std::size_t>(M) * d);
      for (auto& v : w) v = static_cast<Scalar>(static_cast<int>(rng() % 7) - 3);
      for (auto& v : a) v = static_cast<Scalar>(static_cast<int>(rng() % 7) - 3);
      arr.load_stationary(w);
      std::vector<Scalar> acc(static_cast<std::size_t>(M) * d, 0);
      const Index cycles = arr.stream(
          M,
          [&](Index m, std::span<Scalar> lanes) {
            std::copy_n(a.begin() + static_cast<std::ptrdiff_t>(m * dim), dim, lanes.begin());
          },
          acc);
      CHECK(cycles == M + 2 * (dim - 1));
      for (Index m = 0; m < M; ++m)
        for (std::size_t c = 0; c < d; ++c) {
          Scalar want = 0;
          for (std::size_t k = 0; k < d; ++k) want += a[static_cast<std::size_t>(m) * d + k] * w[k * d + c];
          CHECK(acc[static_cast<std::size_t>(m) * d + c] == want);
        }
    }
  }
  std::vector<Scalar> acc(16 * 16);
  CHECK(pe.stream(16, [](Index, std::span<Scalar>) {}, acc) == 46);
}

TEST_CASE("crossbar recovery") {
  std::vector<Scalar> lanes(16, -1);
  SECTION("full mask copies the payload") {
    std::vector<Scalar> p(16);
    for (int i = 0; i < 16; ++i) p[static_cast<std::size_t>(i)] = static_cast<Scalar>(i + 1);
    std::fill(lanes.begin(), lanes.end(), 0);
    sim::crossbar_recover({0, 0xFFFF, 16}, p, lanes);
    CHECK(lanes == p);
  }
  SECTION("single lane") {
    std::fill(lanes.begin(), lanes.end(), 0);
    const std::vector<Scalar> p{9};
    sim::crossbar_recover({0, 0x0001, 1}, p, lanes);
    CHECK(lanes[0] == 9);
    for (std::size_t i = 1; i < 16; ++i) CHECK(lanes[i] == 0);
  }
  SECTION("mismatched payload") {
    const std::vector<Scalar> p{1, 2};
    CHECK_THROWS_AS(sim::crossbar_recover({0, 0x0007, 3}, p, lanes), sim::MaskPayloadMismatch);
    CHECK_THROWS_AS(sim::crossbar_recover({0, 0x0007, 2}, p, lanes), sim::MaskPayloadMismatch);
  }
  SECTION("scatter after compress restores random lane vectors") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 1000; ++i) {
      const LaneMask mask = rng() & 0xFFFF;
      std::vector<Scalar> original(16, 0), payload;
      for (int l = 0; l < 16; ++l)
        if ((mask >> l) & 1U) {
          original[static_cast<std::size_t>(l)] = static_cast<Scalar>(rng() % 100 + 1);
          payload.push_back(original[static_cast<std::size_t>(l)]);
        }
      std::vector<Scalar> out(16, 0);
      sim::crossbar_recover({0, mask, std::popcount(mask)}, payload, out);
      CHECK(out == original);
    }
  }
}

TEST_CASE("functional runs equal the reference on random small layers") {
  std::mt19937_64 rng(7);
  const sim::SimConfig cfg;
  for (int i = 0; i < 40; ++i) {
    const RawGeometry raw = verify::random_geometry(rng, 12, 4);
    const auto cx = verify::check_backprop(raw, rng());
    INFO((cx ? cx->describe() : std::string()));
    CHECK_FALSE(cx.has_value());
  }
}

TEST_CASE("functional runs with other array sizes") {
  std::mt19937_64 rng(9);
  for (int dim : {1, 4, 7, 32}) {
    sim::SimConfig cfg;
    cfg.array_dim = dim;
    cfg.buffer_b_depth = dim;
    for (int i = 0; i < 5; ++i) {
      const LayerGeometry g = LayerGeometry::derive(verify::random_geometry(rng, 10, 4));
      const Ops ops(g, rng());
      const sim::Operands v = ops.view();
      for (Algo algo : {Algo::traditional, Algo::bp_im2col}) {
        CHECK(*sim::run_gemm(Phase::loss, algo, g, &v, cfg).result ==
              ref::loss_backward_ref(ops.d_out, ops.kernel, g));
        CHECK(*sim::run_gemm(Phase::gradient, algo, g, &v, cfg).result ==
              ref::gradient_backward_ref(ops.input, ops.d_out, g));
      }
    }
  }
}

TEST_CASE("missing or misshaped operands") {
  const LayerGeometry g = layer("9/2/3/3/2/1");
  const sim::SimConfig cfg;
  Tensor4D kernel(kernel_dims(g));
  sim::Operands ops{nullptr, &kernel, nullptr};
  CHECK_THROWS_AS(sim::run_gemm(Phase::loss, Algo::bp_im2col, g, &ops, cfg), ShapeMismatch);
  Tensor4D wrong({1, 1, 1, 1});
  ops.d_out = &wrong;
  CHECK_THROWS_AS(sim::run_gemm(Phase::loss, Algo::bp_im2col, g, &ops, cfg), ShapeMismatch);
}

TEST_CASE("timing-only and functional runs report the same counters") {
  const LayerGeometry g = layer("13/5/6/3/2/1");
  const Ops ops(g, 11);
  const sim::Operands v = ops.view();
  const sim::SimConfig cfg;
  for (Phase phase : {Phase::inference, Phase::loss, Phase::gradient})
    for (Algo algo : {Algo::traditional, Algo::bp_im2col}) {
      const auto t = sim::run_gemm(phase, algo, g, nullptr, cfg).report;
      const auto f = sim::run_gemm(phase, algo, g, &v, cfg).report;
      CHECK(t.compute_cycles == f.compute_cycles);
      CHECK(t.onchip.buf_a_to_pe == f.onchip.buf_a_to_pe);
      CHECK(t.onchip.buf_b_to_pe == f.onchip.buf_b_to_pe);
      CHECK(t.offchip.total() == f.offchip.total());
      CHECK_FALSE(t.checksum.has_value());
      CHECK(f.checksum.has_value());
    }
}

TEST_CASE("loss results of both algorithms have equal checksums") {
  const LayerGeometry g = layer("112/64/64/3/2/1", 1);
  const Ops ops(g, 42);
  const sim::Operands v = ops.view();
  const sim::SimConfig cfg;
  const auto trad = sim::run_gemm(Phase::loss, Algo::traditional, g, &v, cfg);
  const auto bp = sim::run_gemm(Phase::loss, Algo::bp_im2col, g, &v, cfg);
  REQUIRE(trad.report.checksum.has_value());
  CHECK(trad.report.checksum == bp.report.checksum);
  CHECK(*bp.result == ref::loss_backward_ref(ops.d_out, ops.kernel, g));
}

TEST_CASE("cycle model") {
  const sim::SimConfig cfg;
  SECTION("dense operands: passes of M + 2(dim-1) after one tile load") {
    const LayerGeometry g = layer("16/16/16/1/1/0", 1);  // 16 x 256 x 16
    const auto r = sim::run_gemm(Phase::inference, Algo::traditional, g, nullptr, cfg).report;
    CHECK(r.k_tiles == 1);
    CHECK(r.col_tiles == 16);
    CHECK(r.stall_cycles == 0);
    CHECK(r.compute_cycles == 16 + 16 * 46);
  }
  SECTION("bp loss pass count matches traditional") {
    const LayerGeometry g = layer("28/244/244/3/2/1");
    const auto t = sim::run_gemm(Phase::loss, Algo::traditional, g, nullptr, cfg).report;
    const auto b = sim::run_gemm(Phase::loss, Algo::bp_im2col, g, nullptr, cfg).report;
    CHECK(t.tile_passes == b.tile_passes);
    CHECK(t.reorg_cycles > 0);
    CHECK(b.reorg_cycles == 0);
    CHECK(b.offchip.reorg == 0);
  }
  SECTION("reorganization overlap hides cycles but not traffic") {
    sim::SimConfig half = cfg;
    half.reorg.overlap = 0.5;
    const LayerGeometry g = layer("56/8/8/3/2/1");
    const auto full = sim::run_gemm(Phase::loss, Algo::traditional, g, nullptr, cfg).report;
    const auto hid = sim::run_gemm(Phase::loss, Algo::traditional, g, nullptr, half).report;
    CHECK(hid.reorg_cycles == full.reorg_cycles / 2);
    CHECK(hid.offchip.reorg == full.offchip.reorg);
  }
}

TEST_CASE("traffic accounting") {
  const sim::SimConfig cfg;
  SECTION("reorganization traffic follows the cost model") {
    const LayerGeometry g = layer("30/4/6/3/2/1");
    const auto loss = sim::run_gemm(Phase::loss, Algo::traditional, g, nullptr, cfg).report;
    const Index map_elems = g.batch() * g.out_channels() * g.loss_map_height() * g.loss_map_width();
    CHECK(loss.reorg_elements == map_elems);
    CHECK(loss.offchip.reorg == map_elems * cfg.data_bytes * 2);
    const auto grad = sim::run_gemm(Phase::gradient, Algo::traditional, g, nullptr, cfg).report;
    CHECK(grad.reorg_elements ==
          g.batch() * g.out_channels() * g.dilated_height() * g.dilated_width());
  }
  SECTION("stride 1 without padding: traffic differs only by burst overhead") {
    const LayerGeometry g = layer("20/4/6/1/1/0");
    for (Phase phase : {Phase::loss, Phase::gradient}) {
      const auto t = sim::run_gemm(phase, Algo::traditional, g, nullptr, cfg).report;
      const auto b = sim::run_gemm(phase, Algo::bp_im2col, g, nullptr, cfg).report;
      const Index bursts = phase == Phase::gradient ? b.bursts_a : b.bursts_b;
      CHECK(t.reorg_elements == 0);
      CHECK(b.offchip.total() - t.offchip.total() == bursts * cfg.burst_overhead_bytes);
      CHECK(b.onchip.buf_a_to_pe == t.onchip.buf_a_to_pe);
      CHECK(b.onchip.buf_b_to_pe == t.onchip.buf_b_to_pe);
    }
  }
  SECTION("port bytes shrink by the operand sparsity") {
    for (const char* s : {"112/64/64/3/2/1", "56/256/512/1/2/0", "13/5/6/5/3/2"}) {
      const LayerGeometry g = layer(s);
      for (Phase phase : {Phase::loss, Phase::gradient}) {
        const auto t = sim::run_gemm(phase, Algo::traditional, g, nullptr, cfg).report;
        const auto b = sim::run_gemm(phase, Algo::bp_im2col, g, nullptr, cfg).report;
        const double red = 1.0 - static_cast<double>(b.sparse_operand_port_bytes()) /
                                     static_cast<double>(t.sparse_operand_port_bytes());
        CHECK(red == Catch::Approx(t.operand_sparsity()).margin(0.02));
        CHECK(b.operand_sparsity() == Catch::Approx(t.operand_sparsity()).margin(1e-12));
      }
    }
  }
  SECTION("stride-2, K=3, P=1 loss payload is about a quarter of the dense operand") {
    const LayerGeometry g = layer("112/64/64/3/2/1");
    const auto t = sim::run_gemm(Phase::loss, Algo::traditional, g, nullptr, cfg).report;
    const auto b = sim::run_gemm(Phase::loss, Algo::bp_im2col, g, nullptr, cfg).report;
    const double ratio = static_cast<double>(b.onchip.buf_b_to_pe) /
                         static_cast<double>(t.onchip.buf_b_to_pe);
    CHECK(ratio == Catch::Approx(0.24).margin(0.01));
  }
  SECTION("off-chip reduction over the table layers is at least 20%") {
    Index trad = 0, bp = 0;
    for (const char* s : {"224/3/64/3/2/0", "112/64/64/3/2/1", "56/256/512/1/2/0",
                          "28/244/244/3/2/1", "14/1024/2048/1/2/0"})
      for (Phase phase : {Phase::loss, Phase::gradient}) {
        trad += sim::run_gemm(phase, Algo::traditional, layer(s), nullptr, cfg).report.offchip.total();
        bp += sim::run_gemm(phase, Algo::bp_im2col, layer(s), nullptr, cfg).report.offchip.total();
      }
    CHECK(1.0 - static_cast<double>(bp) / static_cast<double>(trad) >= 0.20);
  }
}

TEST_CASE("reports are deterministic") {
  const LayerGeometry g = layer("28/16/16/3/2/1");
  const Ops ops(g, 1);
  const sim::Operands v = ops.view();
  const sim::SimConfig cfg;
  const auto a = sim::run_gemm(Phase::gradient, Algo::bp_im2col, g, &v, cfg).report;
  const auto b = sim::run_gemm(Phase::gradient, Algo::bp_im2col, g, &v, cfg).report;
  CHECK(a.compute_cycles == b.compute_cycles);
  CHECK(a.offchip.total() == b.offchip.total());
  CHECK(a.checksum == b.checksum);
}
