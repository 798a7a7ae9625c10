#pragma once

#include <vector>

#include "exsr/tensor.hpp"

namespace exsr {

// Horizontal-flip augmentation modes: none; uneven flips the LR/HR pair or
// the reference set but never both for one sample (introducing a left/right
// mismatch); even flips everything together.
enum class FlipMode { none, uneven, even };

FlipMode flip_mode_from_string(const std::string& s);
std::string to_string(FlipMode f);

struct SynthSpec {
  int hr_size = 64;
  int scale = 4;
  int n_refs = 3;
  // Reference misalignment, drawn uniformly per reference. Kept within the
  // regime the aligner can learn at desk scale (a few LR pixels).
  double max_translate = 4.0;  // px in HR space
  double max_rotate_deg = 8.0;
  double scale_lo = 0.92, scale_hi = 1.08;
  FlipMode flip = FlipMode::none;
  std::uint64_t seed = 1;
  int count = 256;  // distinct underlying textures

  void validate() const;
};

struct SynthSample {
  Tensor lr;                // (1,3,h,w)
  Tensor hr;                // (1,3,s*h,s*w)
  std::vector<Tensor> refs; // n_refs x (1,3,s*h,s*w)
};

// Deterministic stream of samples: index i reuses texture i % count under
// fresh per-index reference transforms and flips. HR images are procedural
// textures (smooth color blobs plus oriented high-frequency detail), each
// reference is the same texture under a random in-range similarity
// transform, and the LR input is the bicubic downsample of the HR image.
class SynthDataset {
 public:
  explicit SynthDataset(const SynthSpec& spec);

  SynthSample sample(std::int64_t index) const;
  const SynthSpec& spec() const { return spec_; }

 private:
  Tensor texture(std::int64_t id) const;
  SynthSpec spec_;
};

}  // namespace exsr
