#include "bpim2col/bp_im2col.hpp"

#include <array>
#include <string>

namespace bpim2col {
namespace {

void check_lanes(int lanes) {
  if (lanes < 1 || lanes > kMaxLanes) {
    throw OutOfRange("lane count " + std::to_string(lanes) + " outside 1.." +
                     std::to_string(kMaxLanes));
  }
}

[[noreturn]] void out_of_range(const char* what, Index value, Index limit) {
  throw OutOfRange(std::string(what) + " " + std::to_string(value) + " outside [0, " +
                   std::to_string(limit) + ")");
}

// Offset of (b, n, h', w') in the stored B x N x H_o x W_o output loss.
Index loss_offset(const LayerGeometry& g, Index b, Index n, Index hq, Index wq) {
  return ((b * g.out_channels() + n) * g.out_height() + hq) * g.out_width() + wq;
}

// Walks the lanes of one transposed-mode matrix row segment without per-lane
// division: the output pixel (b, y, x) and the loss-map column offset advance
// incrementally. Produces the same addresses as map_transposed lane by lane.
class TransposedLaneWalker {
 public:
  TransposedLaneWalker(Index row, Index col_base, const LayerGeometry& g) : g_(g) {
    const Index Kh = g.kernel_h(), Kw = g.kernel_w();
    n_ = row / (Kh * Kw);
    hk_ = (row / Kw) % Kh;
    wk_ = row % Kw;
    const Index plane = g.in_height() * g.in_width();
    cols_left_ = transposed_cols(g) - col_base;
    b_ = col_base / plane;
    const Index t = col_base % plane;
    y_ = t / g.in_width();
    x_ = t % g.in_width();
    start_row();
    start_col();
  }

  // Physical address of the current lane or -1, then advance one column.
  Index next() {
    Index out = -1;
    if (cols_left_ > 0) {
      if (row_ok_ && col_ok()) out = row_base_ + wq_;
      --cols_left_;
      if (++x_ == g_.in_width()) {
        x_ = 0;
        if (++y_ == g_.in_height()) {
          y_ = 0;
          ++b_;
        }
        start_row();
        start_col();
      } else if (++dw_ > 0 && ++wr_ == g_.stride()) {
        wr_ = 0;
        ++wq_;
      }
    }
    return out;
  }

 private:
  void start_row() {
    const Index dh = y_ + hk_ - g_.loss_pad_h();
    row_ok_ = dh >= 0 && dh % g_.stride() == 0 && dh / g_.stride() < g_.out_height();
    if (row_ok_) row_base_ = loss_offset(g_, b_, n_, dh / g_.stride(), 0);
  }
  void start_col() {
    dw_ = x_ + wk_ - g_.loss_pad_w();
    wq_ = dw_ >= 0 ? dw_ / g_.stride() : 0;
    wr_ = dw_ >= 0 ? dw_ % g_.stride() : 0;
  }
  bool col_ok() const { return dw_ >= 0 && wr_ == 0 && wq_ < g_.out_width(); }

  const LayerGeometry& g_;
  Index n_ = 0, hk_ = 0, wk_ = 0;
  Index b_ = 0, y_ = 0, x_ = 0;
  Index cols_left_ = 0;
  bool row_ok_ = false;
  Index row_base_ = 0;
  // column offset into the loss map past the left padding; quotient and
  // remainder by S are tracked only once it is non-negative
  Index dw_ = 0, wq_ = 0, wr_ = 0;
};

class DilatedLaneWalker {
 public:
  DilatedLaneWalker(Index row, Index col_base, const LayerGeometry& g) : g_(g), n_(row) {
    cols_left_ = dilated_cols(g) - col_base;
    const Index t = col_base / g.dilated_width();
    x_ = col_base % g.dilated_width();
    b_ = t / g.dilated_height();
    y_ = t % g.dilated_height();
    start_row();
  }

  Index next() {
    Index out = -1;
    if (cols_left_ > 0) {
      if (row_ok_ && xr_ == 0) out = row_base_ + xq_;
      --cols_left_;
      if (++x_ == g_.dilated_width()) {
        x_ = 0;
        if (++y_ == g_.dilated_height()) {
          y_ = 0;
          ++b_;
        }
        start_row();
      } else if (++xr_ == g_.stride()) {
        xr_ = 0;
        ++xq_;
      }
    }
    return out;
  }

 private:
  void start_row() {
    row_ok_ = y_ % g_.stride() == 0;
    if (row_ok_) row_base_ = loss_offset(g_, b_, n_, y_ / g_.stride(), 0);
    xq_ = x_ / g_.stride();
    xr_ = x_ % g_.stride();
  }

  const LayerGeometry& g_;
  Index n_;
  Index b_ = 0, y_ = 0, x_ = 0;
  Index cols_left_ = 0;
  bool row_ok_ = false;
  Index row_base_ = 0;
  Index xq_ = 0, xr_ = 0;
};

template <typename Walker>
RowScan scan_lanes(Walker walker, int lanes) {
  RowScan scan;
  Index last = -2;
  for (int i = 0; i < lanes; ++i) {
    const Index p = walker.next();
    if (p < 0) continue;
    scan.mask |= LaneMask{1} << i;
    ++scan.payload;
    if (p != last + 1) ++scan.bursts;
    last = p;
  }
  return scan;
}

template <typename Walker>
GatheredRow gather_lanes(Walker walker, const Tensor4D& source, int lanes) {
  std::array<Index, kMaxLanes> phys{};
  GatheredRow out;
  out.values.assign(static_cast<std::size_t>(lanes), Scalar{0});
  for (int i = 0; i < lanes; ++i) {
    const Index p = walker.next();
    phys[static_cast<std::size_t>(i)] = p;
    if (p >= 0) {
      out.mask |= LaneMask{1} << i;
      out.values[static_cast<std::size_t>(i)] = source.at_flat(p);
    }
  }
  out.bursts = compress_lanes(std::span<const Index>(phys.data(), static_cast<std::size_t>(lanes)));
  return out;
}

}  // namespace

Index transposed_rows(const LayerGeometry& g) {
  return g.out_channels() * g.kernel_h() * g.kernel_w();
}
Index transposed_cols(const LayerGeometry& g) {
  return g.batch() * g.in_height() * g.in_width();
}
Index dilated_rows(const LayerGeometry& g) { return g.out_channels(); }
Index dilated_cols(const LayerGeometry& g) {
  return g.batch() * g.dilated_height() * g.dilated_width();
}

bool in_area0_transposed(Index h, Index w, const LayerGeometry& g) {
  return h < g.loss_pad_h() || w < g.loss_pad_w();
}

bool in_area1_transposed(Index h, Index w, const LayerGeometry& g) {
  const Index S = g.stride();
  const Index dh = h - g.loss_pad_h();
  const Index dw = w - g.loss_pad_w();
  if (dh % S > 0 || dw % S > 0) return true;
  // bottom/right padding rows whose offset happens to be a multiple of S
  return dh / S >= g.out_height() || dw / S >= g.out_width();
}

bool in_zero_dilated(Index h, Index w, const LayerGeometry& g) {
  return h % g.stride() > 0 || w % g.stride() > 0;
}

Index transposed_nonzeros(const LayerGeometry& g) {
  // (loss_pad_h, loss_pad_w) is always a stored pixel, so fixing one
  // coordinate there isolates the other axis.
  const Index h_anchor = g.loss_pad_h(), w_anchor = g.loss_pad_w();
  Index rows = 0;
  for (Index hk = 0; hk < g.kernel_h(); ++hk)
    for (Index y = 0; y < g.in_height(); ++y) {
      const Index h = y + hk;
      rows += !in_area0_transposed(h, w_anchor, g) && !in_area1_transposed(h, w_anchor, g);
    }
  Index cols = 0;
  for (Index wk = 0; wk < g.kernel_w(); ++wk)
    for (Index x = 0; x < g.in_width(); ++x) {
      const Index w = x + wk;
      cols += !in_area0_transposed(h_anchor, w, g) && !in_area1_transposed(h_anchor, w, g);
    }
  return g.out_channels() * g.batch() * rows * cols;
}

Index dilated_nonzeros(const LayerGeometry& g) {
  Index rows = 0, cols = 0;
  for (Index h = 0; h < g.dilated_height(); ++h) rows += !in_zero_dilated(h, 0, g);
  for (Index w = 0; w < g.dilated_width(); ++w) cols += !in_zero_dilated(0, w, g);
  return g.out_channels() * g.batch() * rows * cols;
}

AddressMapResult map_transposed(Index addr_in, const LayerGeometry& g) {
  const Index cols = transposed_cols(g);
  const Index total = transposed_rows(g) * cols;
  if (addr_in < 0 || addr_in >= total) out_of_range("transposed-mode address", addr_in, total);
  return map_transposed(addr_in / cols, addr_in % cols, g);
}

AddressMapResult map_transposed(Index row, Index col, const LayerGeometry& g) {
  if (row < 0 || row >= transposed_rows(g)) out_of_range("matrix B row", row, transposed_rows(g));
  if (col < 0 || col >= transposed_cols(g)) out_of_range("matrix B column", col, transposed_cols(g));
  const Index Kh = g.kernel_h(), Kw = g.kernel_w();
  const Index plane = g.in_height() * g.in_width();
  const Index b = col / plane;
  const Index temp1 = row / Kw;
  const Index wk = row % Kw;
  const Index n = temp1 / Kh;
  const Index hk = temp1 % Kh;
  const Index temp2 = col % plane;
  const Index h = temp2 / g.in_width() + hk;
  const Index w = temp2 % g.in_width() + wk;
  if (in_area0_transposed(h, w, g) || in_area1_transposed(h, w, g)) return AddressMapResult::zero();
  const Index hq = (h - g.loss_pad_h()) / g.stride();
  const Index wq = (w - g.loss_pad_w()) / g.stride();
  return AddressMapResult::physical(loss_offset(g, b, n, hq, wq));
}

AddressMapResult map_dilated(Index addr_in, const LayerGeometry& g) {
  const Index cols = dilated_cols(g);
  const Index total = dilated_rows(g) * cols;
  if (addr_in < 0 || addr_in >= total) out_of_range("dilated-mode address", addr_in, total);
  return map_dilated(addr_in / cols, addr_in % cols, g);
}

AddressMapResult map_dilated(Index row, Index col, const LayerGeometry& g) {
  if (row < 0 || row >= dilated_rows(g)) out_of_range("matrix A row", row, dilated_rows(g));
  if (col < 0 || col >= dilated_cols(g)) out_of_range("matrix A column", col, dilated_cols(g));
  const Index temp = col / g.dilated_width();
  const Index w = col % g.dilated_width();
  const Index b = temp / g.dilated_height();
  const Index h = temp % g.dilated_height();
  if (in_zero_dilated(h, w, g)) return AddressMapResult::zero();
  return AddressMapResult::physical(loss_offset(g, b, row, h / g.stride(), w / g.stride()));
}

std::vector<CompressedBurst> compress_lanes(std::span<const Index> physical) {
  std::vector<CompressedBurst> bursts;
  Index last = -2;
  for (std::size_t i = 0; i < physical.size(); ++i) {
    const Index p = physical[i];
    if (p < 0) continue;
    if (bursts.empty() || p != last + 1) bursts.push_back({p, 0, 0});
    bursts.back().mask |= LaneMask{1} << i;
    ++bursts.back().count;
    last = p;
  }
  return bursts;
}

GatheredRow gather_row_transposed(Index row, Index col_base, const LayerGeometry& g,
                                  const Tensor4D& source, int lanes) {
  check_lanes(lanes);
  expect_dims(source, output_dims(g), "output loss");
  if (row < 0 || row >= transposed_rows(g)) out_of_range("matrix B row", row, transposed_rows(g));
  if (col_base < 0 || col_base >= transposed_cols(g)) {
    out_of_range("matrix B column", col_base, transposed_cols(g));
  }
  return gather_lanes(TransposedLaneWalker(row, col_base, g), source, lanes);
}

RowScan scan_row_transposed(Index row, Index col_base, const LayerGeometry& g, int lanes) {
  check_lanes(lanes);
  return scan_lanes(TransposedLaneWalker(row, col_base, g), lanes);
}

GatheredRow gather_row_dilated(Index row, Index col_base, const LayerGeometry& g,
                               const Tensor4D& source, int lanes) {
  check_lanes(lanes);
  expect_dims(source, output_dims(g), "output loss");
  if (row < 0 || row >= dilated_rows(g)) out_of_range("matrix A row", row, dilated_rows(g));
  if (col_base < 0 || col_base >= dilated_cols(g)) {
    out_of_range("matrix A column", col_base, dilated_cols(g));
  }
  return gather_lanes(DilatedLaneWalker(row, col_base, g), source, lanes);
}

RowScan scan_row_dilated(Index row, Index col_base, const LayerGeometry& g, int lanes) {
  check_lanes(lanes);
  return scan_lanes(DilatedLaneWalker(row, col_base, g), lanes);
}

GatheredTile gather_tile_transposed(Index row_base, Index col_base, const LayerGeometry& g,
                                    const Tensor4D& source, int lanes) {
  check_lanes(lanes);
  GatheredTile tile;
  tile.lanes = lanes;
  tile.rows.reserve(static_cast<std::size_t>(lanes));
  for (int r = 0; r < lanes; ++r) {
    const Index row = row_base + r;
    if (row >= transposed_rows(g) || col_base >= transposed_cols(g)) {
      GatheredRow empty;
      empty.values.assign(static_cast<std::size_t>(lanes), Scalar{0});
      tile.rows.push_back(std::move(empty));
    } else {
      tile.rows.push_back(gather_row_transposed(row, col_base, g, source, lanes));
    }
  }
  return tile;
}

}  // namespace bpim2col
