#pragma once

#include "exsr/tensor.hpp"

namespace exsr {

// Catmull-Rom (a = -0.5) kernel value at distance t.
double cubic_weight(double t);

template <class T>
TensorT<T> bicubic_resize_forward(const TensorT<T>& x, double scale);

// Bicubic resampling with half-pixel center alignment and clamp-replicated
// edges. Output is (N, C, floor(scale*H), floor(scale*W)). Downscaling
// requires an integer reciprocal factor. Fixed linear map; the vjp is its
// transpose. Not trained anywhere: it serves the long-range skip and LR
// synthesis.
template <class T>
DiffOutT<T> bicubic_resize(const TensorT<T>& x, double scale);

}  // namespace exsr
