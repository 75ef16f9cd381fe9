#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpim2col/geometry.hpp"

namespace bpim2col {

using Scalar = float;

class ShapeMismatch : public std::invalid_argument {
 public:
  explicit ShapeMismatch(const std::string& what) : std::invalid_argument(what) {}
};

using Dims4 = std::array<Index, 4>;

std::string to_string(const Dims4& dims);

// Dense 4-d tensor, last dimension fastest:
//   flat(i0,i1,i2,i3) = ((i0*d1 + i1)*d2 + i2)*d3 + i3
// Used in (batch, channel, row, column) order for activations and losses and
// (out channel, in channel, row, column) order for kernels.
class Tensor4D {
 public:
  Tensor4D() = default;
  explicit Tensor4D(const Dims4& dims, Scalar fill = 0);

  const Dims4& dims() const { return dims_; }
  Index dim(int axis) const { return dims_[static_cast<std::size_t>(axis)]; }
  Index size() const { return static_cast<Index>(data_.size()); }

  Index flat(Index i0, Index i1, Index i2, Index i3) const {
    return ((i0 * dims_[1] + i1) * dims_[2] + i2) * dims_[3] + i3;
  }

  Scalar& operator()(Index i0, Index i1, Index i2, Index i3) {
    return data_[static_cast<std::size_t>(flat(i0, i1, i2, i3))];
  }
  Scalar operator()(Index i0, Index i1, Index i2, Index i3) const {
    return data_[static_cast<std::size_t>(flat(i0, i1, i2, i3))];
  }

  Scalar& at_flat(Index i) { return data_[static_cast<std::size_t>(i)]; }
  Scalar at_flat(Index i) const { return data_[static_cast<std::size_t>(i)]; }

  std::span<Scalar> data() { return data_; }
  std::span<const Scalar> data() const { return data_; }

  bool operator==(const Tensor4D&) const = default;

 private:
  Dims4 dims_{0, 0, 0, 0};
  std::vector<Scalar> data_;
};

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(Index rows, Index cols, Scalar fill = 0);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  Scalar& operator()(Index r, Index c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  Scalar operator()(Index r, Index c) const {
    return data_[static_cast<std::size_t>(r * cols_ + c)];
  }

  std::span<Scalar> data() { return data_; }
  std::span<const Scalar> data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Scalar> data_;
};

// Expected tensor shapes for a layer.
Dims4 input_dims(const LayerGeometry& g);   // B, C, H_i, W_i
Dims4 kernel_dims(const LayerGeometry& g);  // N, C, K_h, K_w
Dims4 output_dims(const LayerGeometry& g);  // B, N, H_o, W_o

void expect_dims(const Tensor4D& t, const Dims4& expected, const char* role);

// 64-bit FNV-1a over the IEEE bit patterns of the elements.
std::uint64_t checksum(std::span<const Scalar> values);

}  // namespace bpim2col
