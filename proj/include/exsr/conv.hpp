#pragma once

#include <functional>

#include "exsr/tensor.hpp"

namespace exsr {

// Learned layer: weight (C_out, C_in, K, K), bias (1, C_out, 1, 1). K odd;
// all same-size uses in this project take pad = (K-1)/2, stride 1.
template <class T>
struct Conv2dParamsT {
  TensorT<T> weight;
  TensorT<T> bias;
  int stride = 1;
  int pad = 0;
};

using Conv2dParams = Conv2dParamsT<float>;

template <class T>
struct ConvGradsT {
  TensorT<T> x, weight, bias;
};

template <class T>
struct ConvOutT {
  TensorT<T> value;
  std::function<ConvGradsT<T>(const TensorT<T>&)> vjp;
};

template <class T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const Conv2dParamsT<T>& p);

// Cross-correlation with zero padding; H' = (H + 2*pad - K)/stride + 1.
template <class T>
ConvOutT<T> conv2d(const TensorT<T>& x, const Conv2dParamsT<T>& p);

template <class T>
struct ResidualGradsT {
  TensorT<T> x, w1, b1, w2, b2;
};

template <class T>
struct ResidualOutT {
  TensorT<T> value;
  std::function<ResidualGradsT<T>(const TensorT<T>&)> vjp;
};

// x + conv2(relu(conv1(x))), no normalization. Both convs 3x3, pad 1.
template <class T>
ResidualOutT<T> residual_block(const TensorT<T>& x, const Conv2dParamsT<T>& p1,
                               const Conv2dParamsT<T>& p2);

}  // namespace exsr
