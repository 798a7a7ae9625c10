#pragma once

#include "exsr/conv.hpp"
#include "exsr/sample.hpp"

namespace exsr::ref {

// Naive single-threaded transcriptions of the hot kernels. Kept as the
// comparison baseline for the parallel implementations (tests assert
// agreement, the bench target reports speedups). Do not optimize these.

template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const Conv2dParamsT<T>& p);

template <class T>
ConvGradsT<T> conv2d_backward(const TensorT<T>& x, const Conv2dParamsT<T>& p,
                              const TensorT<T>& dy);

template <class T>
TensorT<T> deformable_conv(const TensorT<T>& x, const Conv2dParamsT<T>& p,
                           const DeformOffsetsT<T>& off);

template <class T>
TensorT<T> bilinear_warp(const TensorT<T>& x, const FlowFieldT<T>& flow);

template <class T>
TensorT<T> correlation_map(const TensorT<T>& img, int k, int d);

template <class T>
TensorT<T> bicubic_resize(const TensorT<T>& x, double scale);

}  // namespace exsr::ref
