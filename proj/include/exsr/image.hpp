#pragma once

#include <string>

#include "exsr/losses.hpp"
#include "exsr/tensor.hpp"

namespace exsr {

// Loads an 8-bit RGB or grayscale PNG/PPM/PGM into (1,C,H,W) in [0,1]
// (dispatch on file magic). Other depths/formats raise FormatError naming
// the offending header bytes.
Tensor load_image(const std::string& path);

// Clamps to [0,1], rounds half-up to 8 bits and writes PNG or PPM/PGM by
// extension. Whole-file atomic. Round-trips 8-bit data losslessly.
void save_image(const Tensor& t, const std::string& path);

Tensor clamp_unit(const Tensor& t);

template <class T>
TensorT<T> flip_horizontal(const TensorT<T>& t);

// 10*log10(peak^2/MSE) over all channels jointly; +inf for identical inputs.
template <class T>
double psnr(const TensorT<T>& a, const TensorT<T>& b, double peak = 1.0);

// Mean SSIM, 11x11 Gaussian window sigma 1.5, K1=0.01 K2=0.03 L=1, valid
// windowing, per channel then averaged.
template <class T>
double ssim(const TensorT<T>& a, const TensorT<T>& b);

// Bicubic downsampling by an integer factor.
template <class T>
TensorT<T> make_lr(const TensorT<T>& hr, int s);

// Mean over map channels, min-max normalized, then a blue-white-red
// diverging colormap centered at the median. One PNG per call.
void corrmap_visualize(const CorrelationMap& m, const std::string& path);

// The colormapped image without the file write (for tests).
Tensor corrmap_render(const CorrelationMap& m);

}  // namespace exsr
