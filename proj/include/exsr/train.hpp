#pragma once

#include <string>
#include <vector>

#include "exsr/losses.hpp"
#include "exsr/model.hpp"
#include "exsr/synth.hpp"

namespace exsr {

// rec: reconstruction only; rec_cor: plus the correlation term; perceptual:
// rec + correlation + feature distance against the model's own LR extractor
// frozen at initialization (no adversarial term at this scale: there is no
// discriminator).
enum class LossMode { rec, rec_cor, perceptual };

LossMode loss_mode_from_string(const std::string& s);
std::string to_string(LossMode m);

struct TrainOptions {
  int iters = 300;
  int batch = 4;
  float learn_rate = 3e-4f;
  LossMode loss = LossMode::rec;
  int corr_k = 3, corr_d = 1;
  LossWeights weights{};
  int holdout = 8;      // held-out evaluation samples
  int eval_every = 100; // PSNR + checkpoint + sample cadence
  std::string out_dir;  // empty: keep everything in memory
  bool emit_images = true;
  int flow_radius = 4, flow_block = 4, flow_levels = 2;
  bool flow_enabled = true;  // large alignment needs a flow source
  double divergence_limit = 1e3;
};

struct TrainResult {
  Model model;
  std::string csv;  // header iter,l_rec,l_cor,l_per,total,psnr_holdout
  std::vector<float> total_history;
  double final_psnr = 0;
  double final_ssim = 0;
  double bicubic_psnr = 0;  // same held-out batch, plain upscaling
  bool aborted = false;
  std::string abort_reason;
};

// Desk-scale training run on the synthetic task. Deterministic given the
// config/spec seeds. Emits checkpoint, CSV log and SR/bicubic/GT sample
// triplets into out_dir when set; aborts on divergence leaving the last
// periodic checkpoint in place.
TrainResult train_toy(const ModelConfig& cfg, const SynthSpec& spec,
                      const TrainOptions& opt);

}  // namespace exsr
