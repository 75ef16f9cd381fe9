#pragma once

// Implicit lowering for the two backpropagation convolutions.
//
// Transposed mode (loss of the input): the stationary operand is the im2col
// of the zero-spaced output loss, a virtual (N*K_h*K_w) x (B*H_i*W_i) matrix.
// Dilated mode (kernel gradient): the dynamic operand is the zero-inserted
// output loss flattened to a virtual N x (B*H_o''*W_o'') matrix.
//
// Neither matrix is ever built. Each virtual element is mapped back to the
// compact (B, N, H_o, W_o) output loss or reported as a structural zero.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "bpim2col/geometry.hpp"
#include "bpim2col/tensor.hpp"

namespace bpim2col {

class OutOfRange : public std::out_of_range {
 public:
  explicit OutOfRange(const std::string& what) : std::out_of_range(what) {}
};

// Physical element offset into the stored output loss, or a structural zero.
class AddressMapResult {
 public:
  static constexpr AddressMapResult zero() { return AddressMapResult(-1); }
  static constexpr AddressMapResult physical(Index index) { return AddressMapResult(index); }

  constexpr bool is_zero() const { return index_ < 0; }
  constexpr Index index() const { return index_; }

  constexpr bool operator==(const AddressMapResult&) const = default;

 private:
  constexpr explicit AddressMapResult(Index i) : index_(i) {}
  Index index_;
};

using LaneMask = std::uint64_t;

inline constexpr int kDefaultLanes = 16;
inline constexpr int kMaxLanes = 64;

// One buffer transaction: the address of the first stored lane plus the mask
// of lanes it covers. Covered lanes read base, base+1, ... in lane order.
struct CompressedBurst {
  Index base = 0;
  LaneMask mask = 0;
  int count = 0;

  bool operator==(const CompressedBurst&) const = default;
};

// Virtual matrix extents.
Index transposed_rows(const LayerGeometry& g);  // N*K_h*K_w
Index transposed_cols(const LayerGeometry& g);  // B*H_i*W_i
Index dilated_rows(const LayerGeometry& g);     // N
Index dilated_cols(const LayerGeometry& g);     // B*H_o''*W_o''

// Pixel (h, w) of the zero-spaced loss map lies in the top/left padding.
bool in_area0_transposed(Index h, Index w, const LayerGeometry& g);

// Pixel (h, w) outside the top/left padding is an inserted zero or lies in the
// bottom/right padding (including the remainder rows/columns).
bool in_area1_transposed(Index h, Index w, const LayerGeometry& g);

// Pixel (h, w) of the zero-inserted loss map is an inserted zero.
bool in_zero_dilated(Index h, Index w, const LayerGeometry& g);

// Stored (non-zero) element counts of the full virtual matrices, evaluated
// with the zero predicates one axis at a time.
Index transposed_nonzeros(const LayerGeometry& g);
Index dilated_nonzeros(const LayerGeometry& g);

AddressMapResult map_transposed(Index addr_in, const LayerGeometry& g);
AddressMapResult map_transposed(Index row, Index col, const LayerGeometry& g);

AddressMapResult map_dilated(Index addr_in, const LayerGeometry& g);
AddressMapResult map_dilated(Index row, Index col, const LayerGeometry& g);

// Splits a lane vector of mapped addresses (negative = zero lane) into the
// fewest bursts whose lanes read consecutive ascending physical addresses.
std::vector<CompressedBurst> compress_lanes(std::span<const Index> physical);

// One row segment of a virtual matrix as fetched by an address-generation
// unit: `lanes` consecutive columns starting at col_base.
struct GatheredRow {
  LaneMask mask = 0;
  std::vector<CompressedBurst> bursts;
  std::vector<Scalar> values;  // zero-filled where the mask bit is clear
};

// Lane statistics only; no tensor reads.
struct RowScan {
  LaneMask mask = 0;
  int bursts = 0;
  int payload = 0;  // stored elements transferred
};

GatheredRow gather_row_transposed(Index row, Index col_base, const LayerGeometry& g,
                                  const Tensor4D& source, int lanes = kDefaultLanes);
RowScan scan_row_transposed(Index row, Index col_base, const LayerGeometry& g,
                            int lanes = kDefaultLanes);

GatheredRow gather_row_dilated(Index row, Index col_base, const LayerGeometry& g,
                               const Tensor4D& source, int lanes = kDefaultLanes);
RowScan scan_row_dilated(Index row, Index col_base, const LayerGeometry& g,
                         int lanes = kDefaultLanes);

// lanes x lanes block of the virtual transposed-mode matrix, one GatheredRow
// per matrix row. Rows or columns past the matrix edge are zero with cleared
// mask bits.
struct GatheredTile {
  int lanes = kDefaultLanes;
  std::vector<GatheredRow> rows;

  Scalar at(int r, int c) const {
    return rows[static_cast<std::size_t>(r)].values[static_cast<std::size_t>(c)];
  }
};

GatheredTile gather_tile_transposed(Index row_base, Index col_base, const LayerGeometry& g,
                                    const Tensor4D& source, int lanes = kDefaultLanes);

}  // namespace bpim2col
