#pragma once

#include "exsr/conv.hpp"
#include "exsr/tensor.hpp"

namespace exsr {

// Per-pixel 2-vector displacement map, shape (N,2,H,W); channel 0 = dy,
// channel 1 = dx, in pixels, target->source convention.
template <class T>
using FlowFieldT = TensorT<T>;

using FlowField = FlowFieldT<float>;

template <class T>
struct WarpGradsT {
  TensorT<T> x, flow;
};

template <class T>
struct WarpOutT {
  TensorT<T> value;
  std::function<WarpGradsT<T>(const TensorT<T>&)> vjp;
};

// out(p) = bilinear_sample(x, p + flow(p)); out-of-bounds taps contribute
// zero. Exact for integer flows inside bounds.
template <class T>
WarpOutT<T> bilinear_warp(const TensorT<T>& x, const FlowFieldT<T>& flow);

// Per-pixel sampling offsets for a deformable convolution: (N, 2*K*K, H, W),
// (dy,dx) interleaved per tap, taps row-major over the kernel.
template <class T>
using DeformOffsetsT = TensorT<T>;

using DeformOffsets = DeformOffsetsT<float>;

template <class T>
struct DeformGradsT {
  TensorT<T> x, weight, bias, offsets;
};

template <class T>
struct DeformOutT {
  TensorT<T> value;
  std::function<DeformGradsT<T>(const TensorT<T>&)> vjp;
};

template <class T>
TensorT<T> deformable_conv_forward(const TensorT<T>& x,
                                   const Conv2dParamsT<T>& p,
                                   const DeformOffsetsT<T>& off);

// Deformable convolution, stride 1, pad (K-1)/2, no modulation mask, one
// offset group. Each tap samples x bilinearly at its nominal position plus
// the learned offset; samples outside the image contribute zero. With all
// offsets zero this reduces exactly to conv2d.
template <class T>
DeformOutT<T> deformable_conv(const TensorT<T>& x, const Conv2dParamsT<T>& p,
                              const DeformOffsetsT<T>& off);

}  // namespace exsr
