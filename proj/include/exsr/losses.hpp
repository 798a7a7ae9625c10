#pragma once

#include "exsr/tensor.hpp"

namespace exsr {

// Local-correlation tensor of an image, shape (N, k*k, H, W). Channel
// (i + (k-1)/2)*k + (j + (k-1)/2) holds, for every pixel, the channel-wise
// inner product with the neighbor displaced by (i*d, j*d) (i along width,
// j along height), after per-channel mean subtraction, normalized by 1/k^2.
// Neighbors outside the image contribute zero; the normalizer never shrinks.
template <class T>
using CorrelationMapT = TensorT<T>;

using CorrelationMap = CorrelationMapT<float>;

template <class T>
struct LossWeightsT {
  T rec = T(1.0), adv = T(0.1), per = T(0.01), cor = T(0.1);
};

using LossWeights = LossWeightsT<float>;

template <class T>
struct ScalarLossOutT {
  T value = T(0);
  std::function<TensorT<T>(T)> vjp;  // cotangent scalar -> d(first input)
};

// mean over elements of sqrt((sr-hr)^2 + eps^2)
template <class T>
ScalarLossOutT<T> charbonnier(const TensorT<T>& sr, const TensorT<T>& hr,
                              T eps = T(1e-3));

template <class T>
TensorT<T> correlation_map_forward(const TensorT<T>& img, int k, int d);

template <class T>
DiffOutT<T> correlation_map(const TensorT<T>& img, int k, int d);

// L1 distance between the correlation maps of sr and hr.
template <class T>
ScalarLossOutT<T> correlation_loss(const TensorT<T>& sr, const TensorT<T>& hr,
                                   int k, int d);

// mean absolute feature distance; the caller supplies the features.
template <class T>
ScalarLossOutT<T> feature_l1(const TensorT<T>& fea_sr, const TensorT<T>& fea_hr);

template <class T>
struct RelativisticLossesT {
  T adv = T(0);  // generator term
  T d = T(0);    // discriminator term
};

// Relativistic average formulation on raw discriminator logits. Log
// arguments are clamped below at 1e-12.
template <class T>
RelativisticLossesT<T> relativistic_losses(const TensorT<T>& logits_hr,
                                           const TensorT<T>& logits_sr);

template <class T>
struct LossBreakdownT {
  T rec = T(0), adv = T(0), per = T(0), cor = T(0), total = T(0);
};

using LossBreakdown = LossBreakdownT<float>;

template <class T>
struct CombinedLossOutT {
  LossBreakdownT<T> terms;
  // d(total)/d(sr) through the rec and cor terms (the per term reaches sr
  // only through whatever feature extractor produced fea_sr).
  std::function<TensorT<T>()> grad_sr;
  // d(total)/d(fea_sr); empty when no features were supplied.
  std::function<TensorT<T>()> grad_fea_sr;
};

// Weighted objective. Optional terms contribute only when their inputs are
// supplied (pass nullptr otherwise).
template <class T>
CombinedLossOutT<T> combined_loss(const TensorT<T>& sr, const TensorT<T>& hr,
                                  const TensorT<T>* fea_sr,
                                  const TensorT<T>* fea_hr,
                                  const TensorT<T>* logits_hr,
                                  const TensorT<T>* logits_sr,
                                  const LossWeightsT<T>& w, int k, int d);

}  // namespace exsr
