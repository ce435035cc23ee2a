#pragma once

#include "hwmnet/tensor.hpp"

namespace hwmnet {

struct PadSpec {
    int right = 0;
    int bottom = 0;
};

/// Single-level orthonormal 2-D Haar transform. Each 2x2 block
/// a=x(2i,2j), b=x(2i,2j+1), c=x(2i+1,2j), d=x(2i+1,2j+1) maps to
///   LL = ( a + b + c + d) / 2
///   HL = (-a - b + c + d) / 2
///   LH = (-a + b - c + d) / 2
///   HH = ( a - b - c + d) / 2
/// Output channels are subband-major: [0,C) holds LL of every input channel,
/// [C,2C) HL, [2C,3C) LH, [3C,4C) HH. The transform is orthonormal, so it
/// preserves the l2 norm and its gradient is the inverse transform.
template <typename S>
Tensor<S> dwt_haar(Graph<S>* g, const Tensor<S>& x);

/// Exact inverse (transpose) of dwt_haar; input channels must divide by 4.
template <typename S>
Tensor<S> iwt_haar(Graph<S>* g, const Tensor<S>& y);

/// Space-to-depth: out[n, c*r*r + dy*r + dx, y, x] = x[n, c, y*r+dy, x*r+dx].
template <typename S>
Tensor<S> pixel_unshuffle(Graph<S>* g, const Tensor<S>& x, int r = 2);

/// Depth-to-space, the exact inverse permutation of pixel_unshuffle.
template <typename S>
Tensor<S> pixel_shuffle(Graph<S>* g, const Tensor<S>& x, int r = 2);

/// Bilinear interpolation with half-pixel centers: source coordinate
/// s = (i + 0.5) * (in/out) - 0.5, clamped to [0, in-1]. Output size equal to
/// the input returns the input values exactly; a factor-2 downsample equals
/// 2x2 block averaging.
template <typename S>
Tensor<S> bilinear_resize(Graph<S>* g, const Tensor<S>& x, int out_h, int out_w);

/// Reflect padding (no edge repeat) on the right/bottom; crop removes it.
/// crop(pad_reflect(x, s), s) == x exactly. Pad amounts must be smaller than
/// the corresponding input dimension.
template <typename S>
Tensor<S> pad_reflect(Graph<S>* g, const Tensor<S>& x, PadSpec spec);
template <typename S>
Tensor<S> crop(Graph<S>* g, const Tensor<S>& x, PadSpec spec);

}  // namespace hwmnet
