/*
 * dynpet : dynamic cardiac PET frame conversion and motion correction
 *
 * Copyright 2026 dynpet contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <vector>

#include "dynpet/tensor.hpp"

// Differentiable primitives. Every op records a backward rule on the
// active Tape (if any input participates in the graph) and validates
// shapes up front, naming the primitive and the offending axes.
//
// Convolution arithmetic (all extents per spatial axis):
//   conv3d / conv1d    out = floor((in + 2*pad - k) / stride) + 1
//   conv_transpose3d   out = (in - 1) * stride - 2*pad + k
// Volumes are laid out channel-major [C, X, Y, Z] with Z fastest; kernels
// are cubic. conv3d supports stride 1 and 2 only.

namespace dynpet {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [R,C] -> [R], mean over the second axis.
Tensor row_mean(const Tensor& a);

Tensor reshape(const Tensor& a, std::vector<int> shape);
/// Channel (axis 0) concatenation; all trailing extents must agree.
Tensor concat(const std::vector<Tensor>& parts);
/// Rows [begin, end) along axis 0.
Tensor slice0(const Tensor& a, int begin, int end);
Tensor transpose2d(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// Natural log; throws on nonpositive entries.
Tensor log(const Tensor& a);
/// Clamps into [lo, hi]; gradient passes only strictly inside the range.
Tensor clamp(const Tensor& a, double lo, double hi);

/// Value copy that does not propagate gradients.
Tensor detach(const Tensor& a);

/// x [Cin,X,Y,Z], w [Cout,Cin,K,K,K], b [Cout]. Zero padding.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);
/// x [Cin,X,Y,Z], w [Cin,Cout,K,K,K], b [Cout]. Upsampling convolution.
Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& b,
                        int stride);
/// x [C,T], w [Cout,C,K], b [Cout]. Stride 1.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int pad);
/// x [N], w [M,N], b [M].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Per-channel affine modulation: out[c,...] = gamma[c] * m[c,...] + beta[c].
Tensor film(const Tensor& m, const Tensor& gamma, const Tensor& beta);

struct LstmWeights {
  // gate order: input, forget, cell, output; each w is [H, F+H], b is [H]
  Tensor wi, bi, wf, bf, wg, bg, wo, bo;
};

struct LstmState {
  Tensor h, c;
};

/// One LSTM step on feature vector x [F] with hidden/cell state [H].
LstmState lstm_cell(const Tensor& x, const LstmState& prev,
                    const LstmWeights& w);

}  // namespace dynpet
