#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bpim2col {

using Index = std::int64_t;

class InvalidGeometry : public std::invalid_argument {
 public:
  explicit InvalidGeometry(const std::string& what) : std::invalid_argument(what) {}
};

// Raw layer shape as written in a layer table: batch, input channels and
// extent, output channels, kernel extent, stride and padding.
struct RawGeometry {
  Index batch = 1;
  Index in_channels = 1;
  Index in_height = 1;
  Index in_width = 1;
  Index out_channels = 1;
  Index kernel_h = 1;
  Index kernel_w = 1;
  Index stride = 1;
  Index pad_h = 0;
  Index pad_w = 0;

  bool operator==(const RawGeometry&) const = default;
};

// Validated layer geometry with every derived extent used by the forward,
// loss and gradient convolutions.
//
//   out_h        forward output height
//   dilated_h    output loss after zero-insertion (S-1 zeros between pixels)
//   spaced_h     output loss after zero-insertion and K-1-P zero rows per side
//   rem_h        (H_i + 2P - K) mod S; rows appended below the spaced map so
//                the transposed convolution covers the full input height
//
// The same holds for the width axis.
class LayerGeometry {
 public:
  // Throws InvalidGeometry naming the violated constraint.
  static LayerGeometry derive(const RawGeometry& raw);

  const RawGeometry& raw() const { return raw_; }

  Index batch() const { return raw_.batch; }
  Index in_channels() const { return raw_.in_channels; }
  Index in_height() const { return raw_.in_height; }
  Index in_width() const { return raw_.in_width; }
  Index out_channels() const { return raw_.out_channels; }
  Index kernel_h() const { return raw_.kernel_h; }
  Index kernel_w() const { return raw_.kernel_w; }
  Index stride() const { return raw_.stride; }
  Index pad_h() const { return raw_.pad_h; }
  Index pad_w() const { return raw_.pad_w; }

  Index out_height() const { return out_h_; }
  Index out_width() const { return out_w_; }
  Index dilated_height() const { return dilated_h_; }
  Index dilated_width() const { return dilated_w_; }
  Index spaced_height() const { return spaced_h_; }
  Index spaced_width() const { return spaced_w_; }
  Index rem_h() const { return rem_h_; }
  Index rem_w() const { return rem_w_; }

  // Zero rows/columns padded above/left of the output loss for the
  // transposed convolution: K-1-P.
  Index loss_pad_h() const { return raw_.kernel_h - 1 - raw_.pad_h; }
  Index loss_pad_w() const { return raw_.kernel_w - 1 - raw_.pad_w; }

  // Spatial extent of the materialized loss operand, remainder included.
  Index loss_map_height() const { return spaced_h_ + rem_h_; }
  Index loss_map_width() const { return spaced_w_ + rem_w_; }

  // Element counts of the four tensors taking part in a layer.
  Index input_elements() const { return batch() * in_channels() * in_height() * in_width(); }
  Index kernel_elements() const { return out_channels() * in_channels() * kernel_h() * kernel_w(); }
  Index output_elements() const { return batch() * out_channels() * out_h_ * out_w_; }

  bool operator==(const LayerGeometry&) const = default;

 private:
  RawGeometry raw_;
  Index out_h_ = 0, out_w_ = 0;
  Index dilated_h_ = 0, dilated_w_ = 0;
  Index spaced_h_ = 0, spaced_w_ = 0;
  Index rem_h_ = 0, rem_w_ = 0;
};

// Parses the square shorthand "H/C/N/K/S/P" used by layer tables, e.g.
// "112/64/64/3/2/1". The batch comes from the caller.
RawGeometry parse_layer_shorthand(std::string_view text, Index batch);

// Inverse of parse_layer_shorthand for square layers; non-square layers use
// "HxW/C/N/KhxKw/S/PhxPw".
std::string format_layer_shorthand(const RawGeometry& raw);

}  // namespace bpim2col
