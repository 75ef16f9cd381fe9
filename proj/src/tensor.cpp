#include "bpim2col/tensor.hpp"

#include <bit>
#include <sstream>

namespace bpim2col {

std::string to_string(const Dims4& dims) {
  std::ostringstream os;
  os << '[' << dims[0] << ',' << dims[1] << ',' << dims[2] << ',' << dims[3] << ']';
  return os.str();
}

Tensor4D::Tensor4D(const Dims4& dims, Scalar fill) : dims_(dims) {
  for (Index d : dims) {
    if (d < 0) throw ShapeMismatch("negative tensor dimension in " + to_string(dims));
  }
  data_.assign(static_cast<std::size_t>(dims[0] * dims[1] * dims[2] * dims[3]), fill);
}

Matrix::Matrix(Index rows, Index cols, Scalar fill) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw ShapeMismatch("negative matrix dimension");
  data_.assign(static_cast<std::size_t>(rows * cols), fill);
}

Dims4 input_dims(const LayerGeometry& g) {
  return {g.batch(), g.in_channels(), g.in_height(), g.in_width()};
}

Dims4 kernel_dims(const LayerGeometry& g) {
  return {g.out_channels(), g.in_channels(), g.kernel_h(), g.kernel_w()};
}

Dims4 output_dims(const LayerGeometry& g) {
  return {g.batch(), g.out_channels(), g.out_height(), g.out_width()};
}

void expect_dims(const Tensor4D& t, const Dims4& expected, const char* role) {
  if (t.dims() != expected) {
    throw ShapeMismatch(std::string(role) + " has shape " + to_string(t.dims()) + ", expected " +
                        to_string(expected));
  }
}

std::uint64_t checksum(std::span<const Scalar> values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Scalar v : values) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    // -0.0 and +0.0 hash alike so sign-of-zero accumulation order is irrelevant
    if ((bits & 0x7fffffffU) == 0) bits = 0;
    for (int i = 0; i < 4; ++i) {
      h ^= (bits >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace bpim2col
