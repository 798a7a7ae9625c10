#pragma once

#include "exsr/rng.hpp"
#include "exsr/tensor.hpp"

namespace exsr {

// (N,C,H,W) -> (N, C*r^2, H/r, W/r); output channel c*r^2 + dy*r + dx holds
// the intra-block offset (dy,dx). Lossless permutation.
template <class T>
DiffOutT<T> space_to_depth(const TensorT<T>& x, int r);

// Exact inverse of space_to_depth with the same channel ordering:
// (N,C,H,W) -> (N, C/r^2, r*H, r*W). Sub-pixel upsampling.
template <class T>
DiffOutT<T> pixel_shuffle(const TensorT<T>& x, int r);

// Nearest-neighbor upsampling by integer factor (plain, not part of the
// differentiable surface; used to state the ICNR property).
template <class T>
TensorT<T> nearest_up(const TensorT<T>& x, int r);

// Fan-in scaled uniform init in +-sqrt(1/(C_in*K*K)).
template <class T>
TensorT<T> fanin_uniform(int c_out, int c_in, int k, Rng& rng);

// ICNR: draw a (C_out/r^2, C_in, K, K) sub-kernel with fan-in uniform init
// and replicate each sub-filter r^2 times, so conv -> pixel_shuffle equals
// nearest-neighbor upsampling of the sub-kernel conv output.
template <class T>
TensorT<T> icnr_init(int c_out, int c_in, int k, int r, Rng& rng);

}  // namespace exsr
