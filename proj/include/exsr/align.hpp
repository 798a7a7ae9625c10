#pragma once

#include <vector>

#include "exsr/conv.hpp"
#include "exsr/sample.hpp"

namespace exsr {

enum class AlignMode { small, large };
enum class AggMode { cofa, average, maxpool };

// Coarse-to-fine block matching. Returns an integer-valued flow mapping dst
// pixels to src content: dst(p) ~ src(p + flow(p)). Per-block SAD minimum
// within +-search_radius of the propagated estimate; ties prefer the smaller
// total displacement magnitude, then lexicographic (dy, dx). Borders sample
// src clamp-replicated. Non-differentiable by construction.
template <class T>
FlowFieldT<T> block_match_flow(const TensorT<T>& src, const TensorT<T>& dst,
                               int search_radius, int block, int levels);

// Offset prediction stack (conv-relu-conv, 3x3) plus the deformable layer.
// In large mode the offsets ride on an externally supplied optical flow.
template <class T>
struct AlignParamsT {
  Conv2dParamsT<T> offset1;  // (2*c_f -> c_f)
  Conv2dParamsT<T> offset2;  // (c_f -> 2*K*K)
  Conv2dParamsT<T> dconv;    // (c_f -> c_f)
  AlignMode mode = AlignMode::small;
};

using AlignParams = AlignParamsT<float>;

template <class T>
struct AlignGradsT {
  TensorT<T> f_ref, f_lr;
  TensorT<T> offset1_w, offset1_b, offset2_w, offset2_b, dconv_w, dconv_b;
};

template <class T>
struct AlignOutT {
  TensorT<T> value;
  std::function<AlignGradsT<T>(const TensorT<T>&)> vjp;
};

// Aligns one reference feature map to the LR content. Small mode predicts
// offsets from [f_ref || f_lr]; large mode warps f_ref by the flow first,
// predicts a residual from [warped || f_lr], and adds the flow to every tap.
// The flow is treated as a constant (no gradient to it).
template <class T>
AlignOutT<T> rfa_align(const TensorT<T>& f_ref, const TensorT<T>& f_lr,
                       const FlowFieldT<T>* flow, const AlignParamsT<T>& p);

template <class T>
struct SimilarityParamsT {
  Conv2dParamsT<T> g1, g2;  // 1x1 embeddings, shared output width
};

using SimilarityParams = SimilarityParamsT<float>;

template <class T>
struct SimilarityGradsT {
  TensorT<T> f_ref_a, f_lr;
  TensorT<T> g1_w, g1_b, g2_w, g2_b;
};

template <class T>
struct SimilarityOutT {
  TensorT<T> value;  // (N,1,H,W), strictly in (0,1)
  std::function<SimilarityGradsT<T>(const TensorT<T>&)> vjp;
};

// Pixel-wise content similarity: sigmoid of the channel inner product of the
// two embeddings.
template <class T>
SimilarityOutT<T> similarity_score(const TensorT<T>& f_ref_a,
                                   const TensorT<T>& f_lr,
                                   const SimilarityParamsT<T>& p);

template <class T>
struct SetGradsT {
  std::vector<TensorT<T>> features;
  std::vector<TensorT<T>> scores;
};

template <class T>
struct AggregateOutT {
  TensorT<T> value;
  std::function<SetGradsT<T>(const TensorT<T>&)> vjp;
};

// Score-weighted pixelwise average over an arbitrary-sized aligned set:
// sum(mu_i * F_i) / sum(mu_i), scores broadcast over channels. The reduction
// sums addends in a value-canonical order so the result is bitwise invariant
// under permutations of the set.
template <class T>
AggregateOutT<T> cofa_aggregate(const std::vector<TensorT<T>>& aligned,
                                const std::vector<TensorT<T>>& scores);

// Unconditioned set reductions for the aggregation ablation.
template <class T>
AggregateOutT<T> aggregate_baseline(const std::vector<TensorT<T>>& aligned,
                                    AggMode kind);

}  // namespace exsr
