#pragma once

// Naive reference implementations of the three convolutions of a training
// step. Everything here is written for clarity, with explicit materialization
// of zero-spaced operands, and serves as the oracle for the implicit address
// mapping and the simulator.

#include "bpim2col/geometry.hpp"
#include "bpim2col/tensor.hpp"

namespace bpim2col::ref {

enum class LoweringMode { inference, transposed, dilated };

// out[b,n,p,q] = sum_{c,u,v} in_pad[b,c,p*S+u,q*S+v] * kernel[n,c,u,v]
Tensor4D conv_forward(const Tensor4D& input, const Tensor4D& kernel, const LayerGeometry& g);

// Output loss with S-1 zeros inserted between pixels and K-1-P zeros padded on
// every side, extended by rem_h rows / rem_w columns at the bottom / right.
// Shape [B, N, H_o''' + rem_h, W_o''' + rem_w].
Tensor4D materialize_loss_operand(const Tensor4D& d_out, const LayerGeometry& g);

// Output loss with zero-insertion only. Shape [B, N, H_o'', W_o''].
Tensor4D materialize_dilated_operand(const Tensor4D& d_out, const LayerGeometry& g);

// Kernel rotated 180 degrees in every (K_h, K_w) plane with the first two
// dimensions swapped. Shape [C, N, K_h, K_w].
Tensor4D rotate_transpose_kernel(const Tensor4D& kernel, const LayerGeometry& g);

// Loss of the layer input: stride-1 convolution of the zero-spaced output loss
// with the rotated, transposed kernel. Shape [B, C, H_i, W_i].
Tensor4D loss_backward_ref(const Tensor4D& d_out, const Tensor4D& kernel, const LayerGeometry& g);

// Kernel gradient by direct summation over output positions.
// Shape [N, C, K_h, K_w].
Tensor4D gradient_backward_ref(const Tensor4D& input, const Tensor4D& d_out,
                               const LayerGeometry& g);

// Kernel gradient as a stride-1 convolution of the padded input by the
// zero-inserted output loss, cropped to the first K_h x K_w window positions.
Tensor4D gradient_backward_dilated_ref(const Tensor4D& input, const Tensor4D& d_out,
                                       const LayerGeometry& g);

// Explicit lowering of one operand.
//   inference:  padded input           -> (C*K_h*K_w) x (B*H_o*W_o)
//   transposed: zero-spaced output loss -> (N*K_h*K_w) x (B*H_i*W_i)
//   dilated:    zero-inserted output loss flattened -> N x (B*H_o''*W_o'')
Matrix explicit_im2col(const Tensor4D& operand, LoweringMode mode, const LayerGeometry& g);

// Stationary operand of the gradient GEMM: im2col of the padded input with
// H_o'' x W_o'' windows at stride 1. Shape (B*H_o''*W_o'') x (C*K_h*K_w).
Matrix gradient_input_im2col(const Tensor4D& input, const LayerGeometry& g);

// Dynamic operands: forward kernel N x (C*K_h*K_w) and the rotated,
// transposed kernel C x (N*K_h*K_w) used by the loss GEMM.
Matrix lowered_forward_kernel(const Tensor4D& kernel, const LayerGeometry& g);
Matrix lowered_loss_kernel(const Tensor4D& kernel, const LayerGeometry& g);

Matrix gemm(const Matrix& a, const Matrix& b);

// Fraction of structurally zero pixels per channel plane of the materialized
// loss operand.
double loss_map_zero_fraction(const LayerGeometry& g);

}  // namespace bpim2col::ref
