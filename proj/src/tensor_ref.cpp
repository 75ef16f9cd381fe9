#include "bpim2col/tensor_ref.hpp"

namespace bpim2col::ref {
namespace {

// Padded-input read: zero outside [0,H) x [0,W).
Scalar padded(const Tensor4D& t, Index b, Index c, Index y, Index x) {
  if (y < 0 || x < 0 || y >= t.dim(2) || x >= t.dim(3)) return 0;
  return t(b, c, y, x);
}

}  // namespace

Tensor4D conv_forward(const Tensor4D& input, const Tensor4D& kernel, const LayerGeometry& g) {
  expect_dims(input, input_dims(g), "input");
  expect_dims(kernel, kernel_dims(g), "kernel");
  const Index S = g.stride();
  Tensor4D out(output_dims(g));
  for (Index b = 0; b < g.batch(); ++b)
    for (Index n = 0; n < g.out_channels(); ++n)
      for (Index p = 0; p < g.out_height(); ++p)
        for (Index q = 0; q < g.out_width(); ++q) {
          Scalar acc = 0;
          for (Index c = 0; c < g.in_channels(); ++c)
            for (Index u = 0; u < g.kernel_h(); ++u)
              for (Index v = 0; v < g.kernel_w(); ++v)
                acc += padded(input, b, c, p * S + u - g.pad_h(), q * S + v - g.pad_w()) *
                       kernel(n, c, u, v);
          out(b, n, p, q) = acc;
        }
  return out;
}

Tensor4D materialize_loss_operand(const Tensor4D& d_out, const LayerGeometry& g) {
  expect_dims(d_out, output_dims(g), "output loss");
  Tensor4D m({g.batch(), g.out_channels(), g.loss_map_height(), g.loss_map_width()});
  const Index S = g.stride();
  for (Index b = 0; b < g.batch(); ++b)
    for (Index n = 0; n < g.out_channels(); ++n)
      for (Index p = 0; p < g.out_height(); ++p)
        for (Index q = 0; q < g.out_width(); ++q)
          m(b, n, g.loss_pad_h() + p * S, g.loss_pad_w() + q * S) = d_out(b, n, p, q);
  return m;
}

Tensor4D materialize_dilated_operand(const Tensor4D& d_out, const LayerGeometry& g) {
  expect_dims(d_out, output_dims(g), "output loss");
  Tensor4D m({g.batch(), g.out_channels(), g.dilated_height(), g.dilated_width()});
  const Index S = g.stride();
  for (Index b = 0; b < g.batch(); ++b)
    for (Index n = 0; n < g.out_channels(); ++n)
      for (Index p = 0; p < g.out_height(); ++p)
        for (Index q = 0; q < g.out_width(); ++q) m(b, n, p * S, q * S) = d_out(b, n, p, q);
  return m;
}

Tensor4D rotate_transpose_kernel(const Tensor4D& kernel, const LayerGeometry& g) {
  expect_dims(kernel, kernel_dims(g), "kernel");
  const Index Kh = g.kernel_h(), Kw = g.kernel_w();
  Tensor4D r({g.in_channels(), g.out_channels(), Kh, Kw});
  for (Index n = 0; n < g.out_channels(); ++n)
    for (Index c = 0; c < g.in_channels(); ++c)
      for (Index u = 0; u < Kh; ++u)
        for (Index v = 0; v < Kw; ++v) r(c, n, Kh - 1 - u, Kw - 1 - v) = kernel(n, c, u, v);
  return r;
}

Tensor4D loss_backward_ref(const Tensor4D& d_out, const Tensor4D& kernel, const LayerGeometry& g) {
  const Tensor4D spaced = materialize_loss_operand(d_out, g);
  const Tensor4D rot = rotate_transpose_kernel(kernel, g);
  Tensor4D d_in(input_dims(g));
  for (Index b = 0; b < g.batch(); ++b)
    for (Index c = 0; c < g.in_channels(); ++c)
      for (Index y = 0; y < g.in_height(); ++y)
        for (Index x = 0; x < g.in_width(); ++x) {
          Scalar acc = 0;
          for (Index n = 0; n < g.out_channels(); ++n)
            for (Index u = 0; u < g.kernel_h(); ++u)
              for (Index v = 0; v < g.kernel_w(); ++v)
                acc += spaced(b, n, y + u, x + v) * rot(c, n, u, v);
          d_in(b, c, y, x) = acc;
        }
  return d_in;
}

Tensor4D gradient_backward_ref(const Tensor4D& input, const Tensor4D& d_out,
                               const LayerGeometry& g) {
  expect_dims(input, input_dims(g), "input");
  expect_dims(d_out, output_dims(g), "output loss");
  const Index S = g.stride();
  Tensor4D d_w(kernel_dims(g));
  for (Index n = 0; n < g.out_channels(); ++n)
    for (Index c = 0; c < g.in_channels(); ++c)
      for (Index u = 0; u < g.kernel_h(); ++u)
        for (Index v = 0; v < g.kernel_w(); ++v) {
          Scalar acc = 0;
          for (Index b = 0; b < g.batch(); ++b)
            for (Index p = 0; p < g.out_height(); ++p)
              for (Index q = 0; q < g.out_width(); ++q)
                acc += padded(input, b, c, p * S + u - g.pad_h(), q * S + v - g.pad_w()) *
                       d_out(b, n, p, q);
          d_w(n, c, u, v) = acc;
        }
  return d_w;
}

Tensor4D gradient_backward_dilated_ref(const Tensor4D& input, const Tensor4D& d_out,
                                       const LayerGeometry& g) {
  expect_dims(input, input_dims(g), "input");
  const Tensor4D dil = materialize_dilated_operand(d_out, g);
  Tensor4D d_w(kernel_dims(g));
  // Tr(input) convolved by Tr(dilated loss): batch plays the channel role.
  for (Index n = 0; n < g.out_channels(); ++n)
    for (Index c = 0; c < g.in_channels(); ++c)
      for (Index u = 0; u < g.kernel_h(); ++u)
        for (Index v = 0; v < g.kernel_w(); ++v) {
          Scalar acc = 0;
          for (Index b = 0; b < g.batch(); ++b)
            for (Index y = 0; y < g.dilated_height(); ++y)
              for (Index x = 0; x < g.dilated_width(); ++x)
                acc += padded(input, b, c, y + u - g.pad_h(), x + v - g.pad_w()) * dil(b, n, y, x);
          d_w(n, c, u, v) = acc;
        }
  return d_w;
}

Matrix explicit_im2col(const Tensor4D& operand, LoweringMode mode, const LayerGeometry& g) {
  const Index Kh = g.kernel_h(), Kw = g.kernel_w();
  switch (mode) {
    case LoweringMode::inference: {
      expect_dims(operand, input_dims(g), "input");
      const Index S = g.stride();
      const Index Ho = g.out_height(), Wo = g.out_width();
      Matrix m(g.in_channels() * Kh * Kw, g.batch() * Ho * Wo);
      for (Index c = 0; c < g.in_channels(); ++c)
        for (Index u = 0; u < Kh; ++u)
          for (Index v = 0; v < Kw; ++v)
            for (Index b = 0; b < g.batch(); ++b)
              for (Index p = 0; p < Ho; ++p)
                for (Index q = 0; q < Wo; ++q)
                  m((c * Kh + u) * Kw + v, (b * Ho + p) * Wo + q) =
                      padded(operand, b, c, p * S + u - g.pad_h(), q * S + v - g.pad_w());
      return m;
    }
    case LoweringMode::transposed: {
      const Tensor4D spaced = materialize_loss_operand(operand, g);
      const Index Hi = g.in_height(), Wi = g.in_width();
      Matrix m(g.out_channels() * Kh * Kw, g.batch() * Hi * Wi);
      for (Index n = 0; n < g.out_channels(); ++n)
        for (Index hk = 0; hk < Kh; ++hk)
          for (Index wk = 0; wk < Kw; ++wk)
            for (Index b = 0; b < g.batch(); ++b)
              for (Index y = 0; y < Hi; ++y)
                for (Index x = 0; x < Wi; ++x)
                  m((n * Kh + hk) * Kw + wk, (b * Hi + y) * Wi + x) = spaced(b, n, y + hk, x + wk);
      return m;
    }
    case LoweringMode::dilated: {
      const Tensor4D dil = materialize_dilated_operand(operand, g);
      const Index Hd = g.dilated_height(), Wd = g.dilated_width();
      Matrix m(g.out_channels(), g.batch() * Hd * Wd);
      for (Index n = 0; n < g.out_channels(); ++n)
        for (Index b = 0; b < g.batch(); ++b)
          for (Index y = 0; y < Hd; ++y)
            for (Index x = 0; x < Wd; ++x) m(n, (b * Hd + y) * Wd + x) = dil(b, n, y, x);
      return m;
    }
  }
  throw ShapeMismatch("unknown lowering mode");
}

Matrix gradient_input_im2col(const Tensor4D& input, const LayerGeometry& g) {
  expect_dims(input, input_dims(g), "input");
  const Index Kh = g.kernel_h(), Kw = g.kernel_w();
  const Index Hd = g.dilated_height(), Wd = g.dilated_width();
  Matrix m(g.batch() * Hd * Wd, g.in_channels() * Kh * Kw);
  for (Index b = 0; b < g.batch(); ++b)
    for (Index y = 0; y < Hd; ++y)
      for (Index x = 0; x < Wd; ++x)
        for (Index c = 0; c < g.in_channels(); ++c)
          for (Index u = 0; u < Kh; ++u)
            for (Index v = 0; v < Kw; ++v)
              m((b * Hd + y) * Wd + x, (c * Kh + u) * Kw + v) =
                  padded(input, b, c, y + u - g.pad_h(), x + v - g.pad_w());
  return m;
}

Matrix lowered_forward_kernel(const Tensor4D& kernel, const LayerGeometry& g) {
  expect_dims(kernel, kernel_dims(g), "kernel");
  const Index row_len = g.in_channels() * g.kernel_h() * g.kernel_w();
  Matrix m(g.out_channels(), row_len);
  for (Index n = 0; n < g.out_channels(); ++n)
    for (Index i = 0; i < row_len; ++i) m(n, i) = kernel.at_flat(n * row_len + i);
  return m;
}

Matrix lowered_loss_kernel(const Tensor4D& kernel, const LayerGeometry& g) {
  const Tensor4D rot = rotate_transpose_kernel(kernel, g);
  const Index row_len = g.out_channels() * g.kernel_h() * g.kernel_w();
  Matrix m(g.in_channels(), row_len);
  for (Index c = 0; c < g.in_channels(); ++c)
    for (Index i = 0; i < row_len; ++i) m(c, i) = rot.at_flat(c * row_len + i);
  return m;
}

Matrix gemm(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeMismatch("gemm inner dimensions differ: " + std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()));
  }
  Matrix y(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index k = 0; k < a.cols(); ++k) {
      const Scalar av = a(i, k);
      if (av == 0) continue;
      for (Index j = 0; j < b.cols(); ++j) y(i, j) += av * b(k, j);
    }
  return y;
}

double loss_map_zero_fraction(const LayerGeometry& g) {
  RawGeometry plane = g.raw();
  plane.batch = 1;
  plane.out_channels = 1;
  const LayerGeometry pg = LayerGeometry::derive(plane);
  const Tensor4D ones(output_dims(pg), 1.0F);
  const Tensor4D m = materialize_loss_operand(ones, pg);
  Index zeros = 0;
  for (Scalar v : m.data()) zeros += (v == 0) ? 1 : 0;
  return static_cast<double>(zeros) / static_cast<double>(m.size());
}

}  // namespace bpim2col::ref
