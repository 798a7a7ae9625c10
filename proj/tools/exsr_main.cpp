// exsr: exemplar-guided super-resolution workbench. Every workflow is a
// batch subcommand emitting files; exit codes: 0 success, 1 check failure,
// 2 usage/configuration error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>

#include "exsr/align.hpp"
#include "exsr/gradcheck.hpp"
#include "exsr/image.hpp"
#include "exsr/losses.hpp"
#include "exsr/model.hpp"
#include "exsr/resize.hpp"
#include "exsr/tensor_io.hpp"
#include "exsr/train.hpp"

namespace {

using nlohmann::json;

// Flat JSON config; explicit command-line flags win over config values.
struct ConfigFile {
  json j = json::object();
  std::vector<std::string> known;

  void load(const std::string& path) {
    try {
      j = json::parse(exsr::read_file(path));
    } catch (const json::exception& e) {
      throw exsr::ConfigError(std::string("bad config JSON: ") + e.what());
    }
    if (!j.is_object())
      throw exsr::ConfigError("config must be a flat JSON object");
  }

  template <class T>
  void apply(CLI::App* cmd, const std::string& flag, T& var) {
    const std::string key = flag.substr(2);
    known.push_back(key);
    if (!j.contains(key)) return;
    if (cmd->get_option(flag)->count() > 0) return;  // flag wins
    try {
      var = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw exsr::ConfigError("config key '" + key + "': " + e.what());
    }
  }

  void reject_unknown() const {
    for (auto it = j.begin(); it != j.end(); ++it) {
      bool ok = false;
      for (const auto& k : known) ok |= (k == it.key());
      if (!ok)
        throw exsr::ConfigError("unknown config key '" + it.key() + "'");
    }
  }
};

std::string fmt_metric(double v) {
  if (std::isinf(v)) return "inf";
  char b[40];
  std::snprintf(b, sizeof b, "%.6f", v);
  return b;
}

int cmd_corrmap(const std::string& input, int k, int d, const std::string& out,
                const std::string& raw) {
  exsr::Tensor img = exsr::load_image(input);
  exsr::CorrelationMap m = exsr::correlation_map_forward(img, k, d);
  exsr::corrmap_visualize(m, out);
  if (!raw.empty()) exsr::write_htf(m, raw);
  return 0;
}

int cmd_gradcheck(const std::string& op, double tol, std::uint64_t seed) {
  exsr::GradCheckReport report = exsr::run_gradcheck(op, tol, seed);
  std::printf("%-20s %-14s %-10s %s\n", "op", "max_rel_err", "tol", "status");
  for (const auto& r : report.rows)
    std::printf("%-20s %-14.3e %-10.1e %s\n", r.op.c_str(), r.rel_err, r.tol,
                r.pass ? "pass" : "FAIL");
  return report.all_pass ? 0 : 1;
}

int cmd_metrics(const std::string& a_path, const std::string& b_path) {
  exsr::Tensor a = exsr::load_image(a_path);
  exsr::Tensor b = exsr::load_image(b_path);
  std::printf("file,psnr,ssim\n%s,%s,%s\n", a_path.c_str(),
              fmt_metric(exsr::psnr(a, b)).c_str(),
              fmt_metric(exsr::ssim(a, b)).c_str());
  return 0;
}

int cmd_flow(const std::string& src_path, const std::string& dst_path,
             const std::string& out, int radius, int block, int levels) {
  exsr::Tensor src = exsr::load_image(src_path);
  exsr::Tensor dst = exsr::load_image(dst_path);
  exsr::FlowField flow =
      exsr::block_match_flow(src, dst, radius, block, levels);
  exsr::write_htf(flow, out);
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& lr_path,
              const std::vector<std::string>& ref_paths,
              const std::vector<std::string>& flow_paths,
              const std::string& out, const std::string& gt_path,
              int flow_radius, int flow_block, int flow_levels) {
  exsr::Model model = exsr::load_checkpoint(ckpt);
  exsr::Tensor lr = exsr::load_image(lr_path);
  std::vector<exsr::Tensor> refs;
  for (const auto& p : ref_paths) refs.push_back(exsr::load_image(p));

  std::vector<exsr::FlowField> flows;
  const bool large = model.cfg.align == exsr::AlignChoice::large;
  if (!flow_paths.empty()) {
    if (flow_paths.size() != refs.size())
      throw exsr::ConfigError("got " + std::to_string(flow_paths.size()) +
                              " flows for " + std::to_string(refs.size()) +
                              " refs");
    for (const auto& p : flow_paths) flows.push_back(exsr::read_htf(p).as_f32());
  } else if (large && !refs.empty()) {
    for (const auto& ref : refs) {
      exsr::Tensor ref_lr = exsr::make_lr(ref, model.cfg.scale);
      flows.push_back(exsr::block_match_flow(ref_lr, lr, flow_radius,
                                             flow_block, flow_levels));
    }
  }
  exsr::Tensor sr = exsr::sr_forward(model, lr, refs,
                                     flows.empty() ? nullptr : &flows);
  exsr::Tensor sr_img = exsr::clamp_unit(sr);
  exsr::save_image(sr_img, out);
  if (!gt_path.empty()) {
    exsr::Tensor gt = exsr::load_image(gt_path);
    std::printf("psnr=%s ssim=%s\n", fmt_metric(exsr::psnr(sr_img, gt)).c_str(),
                fmt_metric(exsr::ssim(sr_img, gt)).c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exemplar-guided super-resolution workbench"};
  app.require_subcommand(1);

  // corrmap
  auto* corrmap = app.add_subcommand("corrmap", "local correlation map of an image");
  std::string cm_input, cm_out, cm_raw;
  int cm_k = 3, cm_d = 1;
  corrmap->add_option("--input", cm_input, "input image (PNG/PPM/PGM)")->required();
  corrmap->add_option("--k", cm_k, "odd correlation window size")->capture_default_str();
  corrmap->add_option("--dilation", cm_d, "window dilation factor")->capture_default_str();
  corrmap->add_option("--out", cm_out, "visualization PNG path")->required();
  corrmap->add_option("--raw", cm_raw, "optional raw map output (HTF)")->capture_default_str();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks of every backward pass");
  std::string gc_op;
  double gc_tol = 0;
  std::uint64_t gc_seed = 1;
  gradcheck->add_option("--op", gc_op, "single op to check (default: all)")->capture_default_str();
  gradcheck->add_option("--tolerance", gc_tol, "override pass threshold (default: per-op)")->capture_default_str();
  gradcheck->add_option("--seed", gc_seed, "random seed")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "desk-scale training on synthetic data");
  std::string tr_config, tr_out, tr_rfa = "small", tr_agg = "cofa",
              tr_flip = "none", tr_loss = "rec", tr_flow_source = "blockmatch";
  int tr_iters = 300, tr_refs = 3, tr_scale = 4, tr_feat = 16, tr_blocks_lr = 2,
      tr_blocks_ref = 1, tr_blocks_recon = 4, tr_batch = 4, tr_hr_size = 64,
      tr_holdout = 8, tr_eval_every = 100, tr_corr_k = 3, tr_corr_d = 1,
      tr_count = 64, tr_flow_radius = 4, tr_flow_block = 4, tr_flow_levels = 2;
  std::uint64_t tr_seed = 1;
  float tr_lr = 3e-4f, tr_lambda_rec = 1.0f, tr_lambda_cor = 0.1f,
        tr_lambda_per = 0.01f;
  train->add_option("--config", tr_config, "flat JSON config (flags win)")->capture_default_str();
  train->add_option("--iters", tr_iters, "training iterations")->capture_default_str();
  train->add_option("--out", tr_out, "output directory (must exist)")->required();
  train->add_option("--refs", tr_refs, "references per sample (0 = no-reference baseline)")->capture_default_str();
  train->add_option("--rfa", tr_rfa, "alignment: conv|small|large")->capture_default_str();
  train->add_option("--agg", tr_agg, "aggregation: cofa|average|maxpool")->capture_default_str();
  train->add_option("--flip", tr_flip, "augmentation: none|uneven|even")->capture_default_str();
  train->add_option("--loss", tr_loss, "objective: rec|rec+cor|p")->capture_default_str();
  train->add_option("--seed", tr_seed, "seed for weights and data")->capture_default_str();
  train->add_option("--scale", tr_scale, "upscaling factor (2/4/8)")->capture_default_str();
  train->add_option("--feat", tr_feat, "feature width")->capture_default_str();
  train->add_option("--blocks-lr", tr_blocks_lr, "LR extractor residual blocks")->capture_default_str();
  train->add_option("--blocks-ref", tr_blocks_ref, "reference extractor residual blocks")->capture_default_str();
  train->add_option("--blocks-recon", tr_blocks_recon, "reconstructor residual blocks")->capture_default_str();
  train->add_option("--lr", tr_lr, "Adam learning rate")->capture_default_str();
  train->add_option("--batch", tr_batch, "batch size")->capture_default_str();
  train->add_option("--hr-size", tr_hr_size, "synthetic HR image size")->capture_default_str();
  train->add_option("--holdout", tr_holdout, "held-out evaluation samples")->capture_default_str();
  train->add_option("--eval-every", tr_eval_every, "PSNR/checkpoint cadence")->capture_default_str();
  train->add_option("--corr-k", tr_corr_k, "correlation loss window")->capture_default_str();
  train->add_option("--corr-d", tr_corr_d, "correlation loss dilation")->capture_default_str();
  train->add_option("--count", tr_count, "distinct synthetic textures")->capture_default_str();
  train->add_option("--flow-source", tr_flow_source, "large-mode flow source: blockmatch|none")->capture_default_str();
  train->add_option("--flow-radius", tr_flow_radius, "block matching search radius")->capture_default_str();
  train->add_option("--flow-block", tr_flow_block, "block matching block size")->capture_default_str();
  train->add_option("--flow-levels", tr_flow_levels, "block matching pyramid levels")->capture_default_str();
  train->add_option("--lambda-rec", tr_lambda_rec, "reconstruction weight")->capture_default_str();
  train->add_option("--lambda-cor", tr_lambda_cor, "correlation weight")->capture_default_str();
  train->add_option("--lambda-per", tr_lambda_per, "perceptual weight")->capture_default_str();

  // infer
  auto* infer = app.add_subcommand("infer", "super-resolve one image with exemplars");
  std::string in_ckpt, in_lr, in_out, in_gt;
  std::vector<std::string> in_refs, in_flows;
  int in_flow_radius = 4, in_flow_block = 4, in_flow_levels = 2;
  infer->add_option("--checkpoint", in_ckpt, "model checkpoint")->required();
  infer->add_option("--lr", in_lr, "LR input image")->required();
  infer->add_option("--ref", in_refs, "reference image(s), any count");
  infer->add_option("--flow", in_flows, "precomputed flow HTF per ref (else block matching)");
  infer->add_option("--out", in_out, "SR output image")->required();
  infer->add_option("--gt", in_gt, "optional ground truth for metrics")->capture_default_str();
  infer->add_option("--flow-radius", in_flow_radius, "block matching search radius")->capture_default_str();
  infer->add_option("--flow-block", in_flow_block, "block matching block size")->capture_default_str();
  infer->add_option("--flow-levels", in_flow_levels, "block matching pyramid levels")->capture_default_str();

  // metrics
  auto* metrics = app.add_subcommand("metrics", "PSNR/SSIM between two images");
  std::string me_a, me_b;
  metrics->add_option("--a", me_a, "image under test")->required();
  metrics->add_option("--b", me_b, "reference image")->required();

  // flow
  auto* flow = app.add_subcommand("flow", "block-matching flow between two images");
  std::string fl_src, fl_dst, fl_out;
  int fl_radius = 4, fl_block = 8, fl_levels = 3;
  flow->add_option("--src", fl_src, "source image (sampled)")->required();
  flow->add_option("--dst", fl_dst, "destination image (flow grid)")->required();
  flow->add_option("--out", fl_out, "flow output (HTF, (1,2,H,W))")->required();
  flow->add_option("--radius", fl_radius, "search radius")->capture_default_str();
  flow->add_option("--block", fl_block, "block size")->capture_default_str();
  flow->add_option("--levels", fl_levels, "pyramid levels")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (corrmap->parsed()) return cmd_corrmap(cm_input, cm_k, cm_d, cm_out, cm_raw);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_op, gc_tol, gc_seed);
    if (metrics->parsed()) return cmd_metrics(me_a, me_b);
    if (flow->parsed()) return cmd_flow(fl_src, fl_dst, fl_out, fl_radius, fl_block, fl_levels);
    if (infer->parsed())
      return cmd_infer(in_ckpt, in_lr, in_refs, in_flows, in_out, in_gt,
                       in_flow_radius, in_flow_block, in_flow_levels);
    if (train->parsed()) {
      ConfigFile cf;
      if (!tr_config.empty()) cf.load(tr_config);
      cf.apply(train, "--iters", tr_iters);
      cf.apply(train, "--refs", tr_refs);
      cf.apply(train, "--rfa", tr_rfa);
      cf.apply(train, "--agg", tr_agg);
      cf.apply(train, "--flip", tr_flip);
      cf.apply(train, "--loss", tr_loss);
      cf.apply(train, "--seed", tr_seed);
      cf.apply(train, "--scale", tr_scale);
      cf.apply(train, "--feat", tr_feat);
      cf.apply(train, "--blocks-lr", tr_blocks_lr);
      cf.apply(train, "--blocks-ref", tr_blocks_ref);
      cf.apply(train, "--blocks-recon", tr_blocks_recon);
      cf.apply(train, "--lr", tr_lr);
      cf.apply(train, "--batch", tr_batch);
      cf.apply(train, "--hr-size", tr_hr_size);
      cf.apply(train, "--holdout", tr_holdout);
      cf.apply(train, "--eval-every", tr_eval_every);
      cf.apply(train, "--corr-k", tr_corr_k);
      cf.apply(train, "--corr-d", tr_corr_d);
      cf.apply(train, "--count", tr_count);
      cf.apply(train, "--flow-source", tr_flow_source);
      cf.apply(train, "--flow-radius", tr_flow_radius);
      cf.apply(train, "--flow-block", tr_flow_block);
      cf.apply(train, "--flow-levels", tr_flow_levels);
      cf.apply(train, "--lambda-rec", tr_lambda_rec);
      cf.apply(train, "--lambda-cor", tr_lambda_cor);
      cf.apply(train, "--lambda-per", tr_lambda_per);
      cf.reject_unknown();

      exsr::ModelConfig cfg;
      cfg.scale = tr_scale;
      cfg.n_refs = tr_refs;
      cfg.lr_blocks = tr_blocks_lr;
      cfg.ref_blocks = tr_blocks_ref;
      cfg.recon_blocks = tr_blocks_recon;
      cfg.feat_width = tr_feat;
      cfg.align = exsr::align_choice_from_string(tr_rfa);
      cfg.agg = exsr::agg_mode_from_string(tr_agg);
      cfg.seed = tr_seed;

      exsr::SynthSpec spec;
      spec.hr_size = tr_hr_size;
      spec.scale = tr_scale;
      spec.n_refs = tr_refs;
      spec.flip = exsr::flip_mode_from_string(tr_flip);
      spec.seed = tr_seed;
      spec.count = tr_count;

      exsr::TrainOptions opt;
      opt.iters = tr_iters;
      opt.batch = tr_batch;
      opt.learn_rate = tr_lr;
      opt.loss = exsr::loss_mode_from_string(tr_loss);
      opt.corr_k = tr_corr_k;
      opt.corr_d = tr_corr_d;
      opt.weights.rec = tr_lambda_rec;
      opt.weights.cor = tr_lambda_cor;
      opt.weights.per = tr_lambda_per;
      opt.holdout = tr_holdout;
      opt.eval_every = tr_eval_every;
      opt.out_dir = tr_out;
      if (tr_flow_source == "blockmatch") {
        opt.flow_enabled = true;
      } else if (tr_flow_source == "none") {
        opt.flow_enabled = false;
      } else {
        throw exsr::ConfigError("unknown flow source: " + tr_flow_source);
      }
      opt.flow_radius = tr_flow_radius;
      opt.flow_block = tr_flow_block;
      opt.flow_levels = tr_flow_levels;

      exsr::TrainResult res = exsr::train_toy(cfg, spec, opt);
      if (res.aborted) {
        std::fprintf(stderr, "training aborted: %s\n", res.abort_reason.c_str());
        return 1;
      }
      std::printf("final holdout psnr=%s ssim=%s bicubic=%s\n",
                  fmt_metric(res.final_psnr).c_str(),
                  fmt_metric(res.final_ssim).c_str(),
                  fmt_metric(res.bicubic_psnr).c_str());
      return 0;
    }
  } catch (const exsr::ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const exsr::ParamError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const exsr::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const exsr::FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const exsr::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
