#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "exsr/align.hpp"
#include "exsr/conv.hpp"
#include "exsr/tensor.hpp"

namespace exsr {

// Alignment flavor at the network level. `conv` is the ablation that swaps
// the deformable layer for a plain convolution (no offset prediction).
enum class AlignChoice { conv, small, large };

std::string to_string(AlignChoice a);
std::string to_string(AggMode a);
AlignChoice align_choice_from_string(const std::string& s);
AggMode agg_mode_from_string(const std::string& s);

struct ModelConfig {
  int scale = 4;          // 2, 4 or 8
  int n_refs = 3;
  int lr_blocks = 5;      // residual blocks in the LR extractor
  int ref_blocks = 3;     // residual blocks in the reference extractor
  int recon_blocks = 20;  // residual blocks in the reconstructor
  int feat_width = 64;
  AlignChoice align = AlignChoice::small;
  AggMode agg = AggMode::cofa;
  std::uint64_t seed = 1;

  void validate() const;
  std::string to_json() const;  // canonical (sorted keys, no whitespace)
  static ModelConfig from_json(const std::string& s);
};

// Toy sizing: full gradient checks and the trend runs finish in seconds.
ModelConfig toy_config();

template <class T>
struct ConvLayerT {
  ParamT<T>* w = nullptr;
  ParamT<T>* b = nullptr;
  int stride = 1, pad = 0;
  Conv2dParamsT<T> params() const { return {w->value, b->value, stride, pad}; }
};

template <class T>
struct ResBlockRefT {
  ConvLayerT<T> conv1, conv2;
};

template <class T>
using BackFn = std::function<TensorT<T>(const TensorT<T>&)>;

template <class T>
struct ModelT {
  ModelConfig cfg;
  ParamRegistryT<T> params;

  ConvLayerT<T> lr_head;
  std::vector<ResBlockRefT<T>> lr_blocks;

  // reference path, present iff n_refs > 0
  ConvLayerT<T> ref_mono;  // learned 1x1 RGB->mono
  ConvLayerT<T> ref_head;  // s^2 -> c_f after space_to_depth
  std::vector<ResBlockRefT<T>> ref_blocks;
  ConvLayerT<T> off1, off2, dconv;
  ConvLayerT<T> g1, g2;

  std::vector<ResBlockRefT<T>> recon_blocks;
  std::vector<ConvLayerT<T>> up_stages;  // c_f -> 4*c_f, one per x2 stage
  ConvLayerT<T> out_conv;                // c_f -> 3
};

using Model = ModelT<float>;

template <class T>
ModelT<T> make_model(const ModelConfig& cfg);

// Total scalar count over all parameters.
template <class T>
std::size_t total_param_scalars(const ModelT<T>& m);

// (N,3,h,w) -> (N,c_f,h,w). When back is non-null it receives a closure
// that routes an output cotangent to the input and accumulates param grads.
template <class T>
TensorT<T> extract_lr(const ModelT<T>& m, const TensorT<T>& i_lr,
                      BackFn<T>* back = nullptr);

// (N,3,s*h,s*w) -> (N,c_f,h,w): mono conv, space_to_depth(s), conv + blocks.
template <class T>
TensorT<T> extract_ref(const ModelT<T>& m, const TensorT<T>& i_ref,
                       BackFn<T>* back = nullptr);

// (N,c_f,h,w) -> (N,3,s*h,s*w) residual image.
template <class T>
TensorT<T> reconstruct(const ModelT<T>& m, const TensorT<T>& f_f,
                       BackFn<T>* back = nullptr);

template <class T>
struct ForwardTrace {
  // Accumulates parameter gradients for d(I^SR); returns d(i_lr).
  std::function<TensorT<T>(const TensorT<T>&)> backward;
};

// Full forward pass: bicubic skip + reconstructed residual. refs may be any
// size (the aggregation is set-size agnostic); it must be empty when the
// model was built without a reference path. flows are required per ref in
// large mode. Output is NOT clamped; clamp only at image export.
template <class T>
TensorT<T> sr_forward(const ModelT<T>& m, const TensorT<T>& i_lr,
                      const std::vector<TensorT<T>>& refs,
                      const std::vector<FlowFieldT<T>>* flows = nullptr,
                      ForwardTrace<T>* trace = nullptr);

// Checkpoint: "HMC1" | u32 config-JSON length | JSON | per param sorted by
// id: u32 id length | id | HTF block. Bit-exact round-trip.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

// Weight snapshot of the LR extractor, used as the fixed feature network for
// the perceptual term (runs on any input size).
template <class T>
struct FrozenExtractorT {
  Conv2dParamsT<T> head;
  std::vector<std::array<Conv2dParamsT<T>, 2>> blocks;
};

template <class T>
FrozenExtractorT<T> snapshot_lr_extractor(const ModelT<T>& m);

// Forward through the snapshot; back routes the cotangent to the input only
// (the snapshot weights never receive gradients).
template <class T>
TensorT<T> frozen_extract(const FrozenExtractorT<T>& fe, const TensorT<T>& x,
                          BackFn<T>* back = nullptr);

}  // namespace exsr
