#include "bpim2col/verify.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "bpim2col/systolic_sim.hpp"
#include "bpim2col/tensor_ref.hpp"

namespace bpim2col::verify {
namespace {

std::string show(AddressMapResult r) {
  return r.is_zero() ? "zero" : "physical " + std::to_string(r.index());
}

std::string show_value(Scalar v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

Tensor4D index_source(const LayerGeometry& g) {
  Tensor4D t(output_dims(g));
  for (Index i = 0; i < t.size(); ++i) t.at_flat(i) = static_cast<Scalar>(i + 1);
  return t;
}

bool valid(const RawGeometry& raw) {
  try {
    (void)LayerGeometry::derive(raw);
    return true;
  } catch (const InvalidGeometry&) {
    return false;
  }
}

Index rand_in(std::mt19937_64& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

// Compares one lowered matrix against the mapper and, optionally, the
// burst gather path. Every element of the oracle is visited.
std::optional<Counterexample> check_mode(const LayerGeometry& g, const Tensor4D& src,
                                         const Matrix& oracle, const Mapper& mapper,
                                         bool transposed, bool check_gather, const char* mode) {
  auto fail = [&](Index r, Index c, std::string expected, std::string actual) {
    return Counterexample{g.raw(), mode, r, c, std::move(expected), std::move(actual)};
  };
  for (Index r = 0; r < oracle.rows(); ++r)
    for (Index c = 0; c < oracle.cols(); ++c) {
      const Scalar want = oracle(r, c);
      const AddressMapResult got = mapper(r, c, g);
      const bool ok = got.is_zero()
                          ? want == 0
                          : (got.index() < src.size() && src.at_flat(got.index()) == want);
      if (!ok) {
        return fail(r, c,
                    want == 0 ? "zero" : "physical " + std::to_string(static_cast<Index>(want) - 1),
                    show(got));
      }
    }
  if (!check_gather) return std::nullopt;

  const int lanes = kDefaultLanes;
  for (Index r = 0; r < oracle.rows(); ++r)
    for (Index c0 = 0; c0 < oracle.cols(); c0 += lanes) {
      const GatheredRow row = transposed ? gather_row_transposed(r, c0, g, src, lanes)
                                         : gather_row_dilated(r, c0, g, src, lanes);
      std::array<Scalar, kMaxLanes> rebuilt{};
      LaneMask covered = 0;
      for (const CompressedBurst& b : row.bursts) {
        Index addr = b.base;
        for (int i = 0; i < lanes; ++i)
          if ((b.mask >> i) & 1U) rebuilt[static_cast<std::size_t>(i)] = src.at_flat(addr++);
        covered |= b.mask;
      }
      for (int i = 0; i < lanes; ++i) {
        const Index c = c0 + i;
        const Scalar want = c < oracle.cols() ? oracle(r, c) : Scalar{0};
        const bool bit = (row.mask >> i) & 1U;
        const auto li = static_cast<std::size_t>(i);
        if (row.values[li] != want || bit != (want != 0) || rebuilt[li] != want ||
            covered != row.mask) {
          return fail(r, c, "value " + show_value(want),
                      std::string("gathered ") + show_value(row.values[li]) + " burst " +
                          show_value(rebuilt[li]));
        }
      }
    }
  return std::nullopt;
}

std::optional<Counterexample> compare(const RawGeometry& raw, const char* mode,
                                      const Tensor4D& want, const Tensor4D& got) {
  if (want.dims() != got.dims()) {
    return Counterexample{raw, mode, -1, -1, to_string(want.dims()), to_string(got.dims())};
  }
  for (Index i = 0; i < want.size(); ++i)
    if (want.at_flat(i) != got.at_flat(i)) {
      return Counterexample{raw, mode, i, 0, show_value(want.at_flat(i)),
                            show_value(got.at_flat(i))};
    }
  return std::nullopt;
}

// L = sum(out^2)/2 in double precision.
double half_square_loss(const Tensor4D& input, const Tensor4D& kernel, const LayerGeometry& g) {
  const Index S = g.stride();
  double loss = 0.0;
  for (Index b = 0; b < g.batch(); ++b)
    for (Index n = 0; n < g.out_channels(); ++n)
      for (Index p = 0; p < g.out_height(); ++p)
        for (Index q = 0; q < g.out_width(); ++q) {
          double acc = 0.0;
          for (Index c = 0; c < g.in_channels(); ++c)
            for (Index u = 0; u < g.kernel_h(); ++u)
              for (Index v = 0; v < g.kernel_w(); ++v) {
                const Index y = p * S + u - g.pad_h(), x = q * S + v - g.pad_w();
                if (y < 0 || x < 0 || y >= g.in_height() || x >= g.in_width()) continue;
                acc += static_cast<double>(input(b, c, y, x)) *
                       static_cast<double>(kernel(n, c, u, v));
              }
          loss += 0.5 * acc * acc;
        }
  return loss;
}

}  // namespace

MappingUnderTest library_mapping() {
  return {[](Index r, Index c, const LayerGeometry& g) { return map_transposed(r, c, g); },
          [](Index r, Index c, const LayerGeometry& g) { return map_dilated(r, c, g); }, true};
}

Fault parse_fault(const std::string& text) {
  if (text == "none") return Fault::none;
  if (text == "area0-threshold") return Fault::area0_threshold;
  if (text == "dilated-last-row") return Fault::dilated_last_row;
  throw std::invalid_argument("unknown fault '" + text + "'");
}

MappingUnderTest mutated_mapping(Fault fault) {
  MappingUnderTest m = library_mapping();
  switch (fault) {
    case Fault::none:
      break;
    case Fault::area0_threshold:
      // h < K-P instead of h < K-1-P
      m.transposed = [](Index row, Index col, const LayerGeometry& g) {
        const Index Kh = g.kernel_h(), Kw = g.kernel_w();
        const Index plane = g.in_height() * g.in_width();
        const Index h = (col % plane) / g.in_width() + (row / Kw) % Kh;
        const Index w = (col % plane) % g.in_width() + row % Kw;
        if (h <= g.loss_pad_h() || w <= g.loss_pad_w()) return AddressMapResult::zero();
        return map_transposed(row, col, g);
      };
      m.check_gather = false;
      break;
    case Fault::dilated_last_row:
      m.dilated = [](Index row, Index col, const LayerGeometry& g) {
        const Index h = (col / g.dilated_width()) % g.dilated_height();
        if (h == g.dilated_height() - 1) return AddressMapResult::zero();
        return map_dilated(row, col, g);
      };
      m.check_gather = false;
      break;
  }
  return m;
}

RawGeometry random_geometry(std::mt19937_64& rng, Index max_extent, Index max_channels) {
  RawGeometry raw;
  raw.batch = rand_in(rng, 1, 3);
  raw.in_channels = rand_in(rng, 1, max_channels);
  raw.out_channels = rand_in(rng, 1, max_channels);
  raw.stride = rand_in(rng, 1, 4);
  raw.kernel_h = rand_in(rng, 1, 7);
  raw.kernel_w = rand_in(rng, 1, 7);
  raw.pad_h = rand_in(rng, 0, raw.kernel_h - 1);
  raw.pad_w = rand_in(rng, 0, raw.kernel_w - 1);
  raw.in_height = rand_in(rng, std::max<Index>(1, raw.kernel_h - 2 * raw.pad_h), max_extent);
  raw.in_width = rand_in(rng, std::max<Index>(1, raw.kernel_w - 2 * raw.pad_w), max_extent);
  return raw;
}

std::string Counterexample::describe() const {
  std::ostringstream os;
  os << mode << " mismatch for layer " << format_layer_shorthand(raw) << " batch " << raw.batch
     << " at row " << row << " col " << col << ": expected " << expected << ", got " << actual;
  return os.str();
}

std::optional<Counterexample> check_mapping(const RawGeometry& raw, const MappingUnderTest& m) {
  const LayerGeometry g = LayerGeometry::derive(raw);
  const Tensor4D src = index_source(g);
  if (auto cx = check_mode(g, src, ref::explicit_im2col(src, ref::LoweringMode::transposed, g),
                           m.transposed, true, m.check_gather, "transposed")) {
    return cx;
  }
  return check_mode(g, src, ref::explicit_im2col(src, ref::LoweringMode::dilated, g), m.dilated,
                    false, m.check_gather, "dilated");
}

std::optional<Counterexample> check_backprop(const RawGeometry& raw, std::uint64_t seed) {
  const LayerGeometry g = LayerGeometry::derive(raw);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Tensor4D& t) {
    for (Scalar& v : t.data()) v = static_cast<Scalar>(static_cast<int>(rng() % 7) - 3);
  };
  Tensor4D input(input_dims(g)), kernel(kernel_dims(g)), d_out(output_dims(g));
  fill(input);
  fill(kernel);
  fill(d_out);
  const sim::Operands ops{&input, &kernel, &d_out};
  const sim::SimConfig cfg;

  const Tensor4D loss_ref = ref::loss_backward_ref(d_out, kernel, g);
  const Tensor4D grad_ref = ref::gradient_backward_ref(input, d_out, g);
  if (auto cx = compare(raw, "gradient formulations", grad_ref,
                        ref::gradient_backward_dilated_ref(input, d_out, g))) {
    return cx;
  }
  for (sim::Algo algo : {sim::Algo::traditional, sim::Algo::bp_im2col}) {
    const std::string suffix = "/" + std::string(sim::to_string(algo));
    const auto loss = sim::run_gemm(sim::Phase::loss, algo, g, &ops, cfg);
    if (auto cx = compare(raw, ("loss" + suffix).c_str(), loss_ref, *loss.result)) return cx;
    const auto grad = sim::run_gemm(sim::Phase::gradient, algo, g, &ops, cfg);
    if (auto cx = compare(raw, ("gradient" + suffix).c_str(), grad_ref, *grad.result)) return cx;
  }
  const auto fwd = sim::run_gemm(sim::Phase::inference, sim::Algo::bp_im2col, g, &ops, cfg);
  return compare(raw, "inference", ref::conv_forward(input, kernel, g), *fwd.result);
}

std::optional<Counterexample> check_finite_differences(const RawGeometry& raw, std::uint64_t seed,
                                                       double rel_tol, int samples) {
  const LayerGeometry g = LayerGeometry::derive(raw);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Tensor4D& t) {
    for (Scalar& v : t.data()) v = static_cast<Scalar>(static_cast<int>(rng() % 7) - 3);
  };
  Tensor4D input(input_dims(g)), kernel(kernel_dims(g));
  fill(input);
  fill(kernel);
  // dL/dout = out for L = sum(out^2)/2.
  const Tensor4D out = ref::conv_forward(input, kernel, g);
  const sim::Operands ops{&input, &kernel, &out};
  const sim::SimConfig cfg;
  const Tensor4D d_in = *sim::run_gemm(sim::Phase::loss, sim::Algo::bp_im2col, g, &ops, cfg).result;
  const Tensor4D d_w =
      *sim::run_gemm(sim::Phase::gradient, sim::Algo::bp_im2col, g, &ops, cfg).result;

  constexpr Scalar eps = 1e-2F;
  auto probe = [&](Tensor4D& t, const Tensor4D& grad, const char* mode)
      -> std::optional<Counterexample> {
    for (int s = 0; s < samples; ++s) {
      const Index i = static_cast<Index>(rng() % static_cast<std::uint64_t>(t.size()));
      const Scalar saved = t.at_flat(i);
      t.at_flat(i) = saved + eps;
      const double up = half_square_loss(input, kernel, g);
      t.at_flat(i) = saved - eps;
      const double down = half_square_loss(input, kernel, g);
      t.at_flat(i) = saved;
      const double fd = (up - down) / (2.0 * static_cast<double>(eps));
      const double analytic = grad.at_flat(i);
      if (std::abs(fd - analytic) > rel_tol * std::max(1.0, std::abs(analytic))) {
        return Counterexample{raw, mode, i, 0, std::to_string(analytic), std::to_string(fd)};
      }
    }
    return std::nullopt;
  };
  if (auto cx = probe(input, d_in, "finite-difference input")) return cx;
  return probe(kernel, d_w, "finite-difference kernel");
}

RawGeometry shrink_counterexample(const RawGeometry& raw,
                                  const std::function<bool(const RawGeometry&)>& fails) {
  static constexpr std::array<Index RawGeometry::*, 10> fields = {
      &RawGeometry::batch,    &RawGeometry::in_channels, &RawGeometry::out_channels,
      &RawGeometry::in_height, &RawGeometry::in_width,   &RawGeometry::pad_h,
      &RawGeometry::pad_w,    &RawGeometry::kernel_h,    &RawGeometry::kernel_w,
      &RawGeometry::stride};
  RawGeometry best = raw;
  bool progress = true;
  while (progress) {
    progress = false;
    for (auto field : fields) {
      const Index floor = (field == &RawGeometry::pad_h || field == &RawGeometry::pad_w) ? 0 : 1;
      const Index current = best.*field;
      for (Index candidate : {floor, current / 2, current - 1}) {
        if (candidate < floor || candidate >= current) continue;
        RawGeometry trial = best;
        trial.*field = candidate;
        if (valid(trial) && fails(trial)) {
          best = trial;
          progress = true;
          break;
        }
      }
    }
  }
  return best;
}

SuiteResult run_suite(const SuiteOptions& opts) {
  SuiteResult res;
  std::mt19937_64 rng(opts.seed);
  for (int i = 0; i < opts.cases; ++i) {
    const RawGeometry raw = random_geometry(rng);
    const LayerGeometry g = LayerGeometry::derive(raw);
    ++res.mapping_cases;
    res.virtual_elements += transposed_rows(g) * transposed_cols(g) + dilated_rows(g) * dilated_cols(g);
    if (check_mapping(raw, opts.mapping)) {
      const RawGeometry small = shrink_counterexample(
          raw, [&](const RawGeometry& r) { return check_mapping(r, opts.mapping).has_value(); });
      res.failure = check_mapping(small, opts.mapping);
      res.failing_case = i;
      return res;
    }

    if (opts.backprop_every > 0 && i % opts.backprop_every == 0) {
      const RawGeometry small = random_geometry(rng, 12, 4);
      const std::uint64_t seed = rng();
      ++res.backprop_cases;
      if (check_backprop(small, seed)) {
        const RawGeometry min = shrink_counterexample(
            small, [&](const RawGeometry& r) { return check_backprop(r, seed).has_value(); });
        res.failure = check_backprop(min, seed);
        res.failing_case = i;
        return res;
      }
    }
    if (opts.fd_every > 0 && i % opts.fd_every == 0) {
      const RawGeometry small = random_geometry(rng, 10, 3);
      const std::uint64_t seed = rng();
      ++res.fd_cases;
      if (auto cx = check_finite_differences(small, seed)) {
        res.failure = cx;
        res.failing_case = i;
        return res;
      }
    }
  }
  return res;
}

}  // namespace bpim2col::verify
