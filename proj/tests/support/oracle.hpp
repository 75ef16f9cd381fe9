#pragma once

// Test-side oracle, written independently of src/: explicit padded copies,
// dense lowered matrices built from first principles, double accumulation.

#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "bpim2col/geometry.hpp"
#include "bpim2col/tensor.hpp"

namespace oracle {

using bpim2col::Index;
using bpim2col::LayerGeometry;
using bpim2col::Scalar;
using bpim2col::Tensor4D;

inline void fill_small_ints(Tensor4D& t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Scalar& v : t.data()) v = static_cast<Scalar>(static_cast<int>(rng() % 7) - 3);
}

inline void fill_index_plus_one(Tensor4D& t) {
  for (Index i = 0; i < t.size(); ++i) t.at_flat(i) = static_cast<Scalar>(i + 1);
}

// Zero-padded copy of an activation tensor.
inline Tensor4D pad(const Tensor4D& x, Index ph, Index pw) {
  Tensor4D out({x.dim(0), x.dim(1), x.dim(2) + 2 * ph, x.dim(3) + 2 * pw});
  for (Index b = 0; b < x.dim(0); ++b)
    for (Index c = 0; c < x.dim(1); ++c)
      for (Index y = 0; y < x.dim(2); ++y)
        for (Index z = 0; z < x.dim(3); ++z) out(b, c, y + ph, z + pw) = x(b, c, y, z);
  return out;
}

inline Tensor4D conv(const Tensor4D& input, const Tensor4D& kernel, const LayerGeometry& g) {
  const Tensor4D xp = pad(input, g.pad_h(), g.pad_w());
  Tensor4D out({g.batch(), g.out_channels(), g.out_height(), g.out_width()});
  for (Index b = 0; b < g.batch(); ++b)
    for (Index n = 0; n < g.out_channels(); ++n)
      for (Index p = 0; p < g.out_height(); ++p)
        for (Index q = 0; q < g.out_width(); ++q) {
          double acc = 0;
          for (Index c = 0; c < g.in_channels(); ++c)
            for (Index u = 0; u < g.kernel_h(); ++u)
              for (Index v = 0; v < g.kernel_w(); ++v)
                acc += double(xp(b, c, p * g.stride() + u, q * g.stride() + v)) *
                       double(kernel(n, c, u, v));
          out(b, n, p, q) = static_cast<Scalar>(acc);
        }
  return out;
}

// Which output-loss pixel sits at (h, w) of the zero-spaced loss map, if any.
// Built from the scatter direction: pixel (p, q) lands at pad + p*S.
inline std::optional<std::pair<Index, Index>> spaced_source(Index h, Index w,
                                                            const LayerGeometry& g) {
  for (Index p = 0; p < g.out_height(); ++p) {
    if (g.kernel_h() - 1 - g.pad_h() + p * g.stride() != h) continue;
    for (Index q = 0; q < g.out_width(); ++q)
      if (g.kernel_w() - 1 - g.pad_w() + q * g.stride() == w) return std::make_pair(p, q);
  }
  return std::nullopt;
}

// Dense transposed-mode matrix of flat source offsets (-1 for zero):
// rows (n, hk, wk), columns (b, y, x), element = spaced[b, n, y+hk, x+wk].
inline std::vector<Index> transposed_offsets(const LayerGeometry& g) {
  const Index Kh = g.kernel_h(), Kw = g.kernel_w(), Hi = g.in_height(), Wi = g.in_width();
  const Index cols = g.batch() * Hi * Wi;
  std::vector<Index> m(static_cast<std::size_t>(g.out_channels() * Kh * Kw * cols), -1);
  for (Index n = 0; n < g.out_channels(); ++n)
    for (Index hk = 0; hk < Kh; ++hk)
      for (Index wk = 0; wk < Kw; ++wk)
        for (Index b = 0; b < g.batch(); ++b)
          for (Index y = 0; y < Hi; ++y)
            for (Index x = 0; x < Wi; ++x) {
              const auto src = spaced_source(y + hk, x + wk, g);
              if (!src) continue;
              const Index row = (n * Kh + hk) * Kw + wk;
              const Index col = (b * Hi + y) * Wi + x;
              m[static_cast<std::size_t>(row * cols + col)] =
                  ((b * g.out_channels() + n) * g.out_height() + src->first) * g.out_width() +
                  src->second;
            }
  return m;
}

// Dense dilated-mode matrix of flat source offsets: rows n, columns (b, h, w)
// of the zero-inserted map.
inline std::vector<Index> dilated_offsets(const LayerGeometry& g) {
  const Index Hd = g.dilated_height(), Wd = g.dilated_width();
  const Index cols = g.batch() * Hd * Wd;
  std::vector<Index> m(static_cast<std::size_t>(g.out_channels() * cols), -1);
  for (Index n = 0; n < g.out_channels(); ++n)
    for (Index b = 0; b < g.batch(); ++b)
      for (Index p = 0; p < g.out_height(); ++p)
        for (Index q = 0; q < g.out_width(); ++q) {
          const Index col = (b * Hd + p * g.stride()) * Wd + q * g.stride();
          m[static_cast<std::size_t>(n * cols + col)] =
              ((b * g.out_channels() + n) * g.out_height() + p) * g.out_width() + q;
        }
  return m;
}

// dL/dIn and dL/dW of L = sum(out * d_out) by scattering each output term.
inline Tensor4D input_grad(const Tensor4D& d_out, const Tensor4D& kernel, const LayerGeometry& g) {
  Tensor4D d_in({g.batch(), g.in_channels(), g.in_height(), g.in_width()});
  for (Index b = 0; b < g.batch(); ++b)
    for (Index n = 0; n < g.out_channels(); ++n)
      for (Index p = 0; p < g.out_height(); ++p)
        for (Index q = 0; q < g.out_width(); ++q)
          for (Index c = 0; c < g.in_channels(); ++c)
            for (Index u = 0; u < g.kernel_h(); ++u)
              for (Index v = 0; v < g.kernel_w(); ++v) {
                const Index y = p * g.stride() + u - g.pad_h();
                const Index x = q * g.stride() + v - g.pad_w();
                if (y < 0 || x < 0 || y >= g.in_height() || x >= g.in_width()) continue;
                d_in(b, c, y, x) += d_out(b, n, p, q) * kernel(n, c, u, v);
              }
  return d_in;
}

inline Tensor4D kernel_grad(const Tensor4D& input, const Tensor4D& d_out, const LayerGeometry& g) {
  Tensor4D d_w({g.out_channels(), g.in_channels(), g.kernel_h(), g.kernel_w()});
  const Tensor4D xp = pad(input, g.pad_h(), g.pad_w());
  for (Index b = 0; b < g.batch(); ++b)
    for (Index n = 0; n < g.out_channels(); ++n)
      for (Index p = 0; p < g.out_height(); ++p)
        for (Index q = 0; q < g.out_width(); ++q)
          for (Index c = 0; c < g.in_channels(); ++c)
            for (Index u = 0; u < g.kernel_h(); ++u)
              for (Index v = 0; v < g.kernel_w(); ++v)
                d_w(n, c, u, v) +=
                    xp(b, c, p * g.stride() + u, q * g.stride() + v) * d_out(b, n, p, q);
  return d_w;
}

}  // namespace oracle
