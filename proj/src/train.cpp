#include "exsr/train.hpp"

#include <cmath>
#include <cstdio>

#include "exsr/align.hpp"
#include "exsr/image.hpp"
#include "exsr/optim.hpp"
#include "exsr/resize.hpp"
#include "exsr/tensor_io.hpp"

namespace exsr {

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "rec") return LossMode::rec;
  if (s == "rec+cor") return LossMode::rec_cor;
  if (s == "p") return LossMode::perceptual;
  throw ConfigError("unknown loss mode: " + s + " (use rec, rec+cor or p)");
}

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::rec: return "rec";
    case LossMode::rec_cor: return "rec+cor";
    default: return "p";
  }
}

namespace {

Tensor stack_batch(const std::vector<Tensor>& items) {
  const Tensor& head = items[0];
  Tensor out(int(items.size()), head.c, head.h, head.w);
  const std::size_t chunk = head.numel();
  for (std::size_t b = 0; b < items.size(); ++b)
    std::copy(items[b].data.begin(), items[b].data.end(),
              out.data.begin() + b * chunk);
  return out;
}

Tensor nth_item(const Tensor& batch, int b) {
  Tensor out(1, batch.c, batch.h, batch.w);
  const std::size_t chunk = out.numel();
  std::copy(batch.data.begin() + b * chunk,
            batch.data.begin() + (b + 1) * chunk, out.data.begin());
  return out;
}

struct Batch {
  Tensor lr, hr;
  std::vector<Tensor> refs;             // one (B,3,sh,sw) tensor per ref slot
  std::vector<FlowField> flows;         // large mode only
};

Batch gather_batch(const SynthDataset& data, std::int64_t start, int count) {
  std::vector<Tensor> lrs, hrs;
  std::vector<std::vector<Tensor>> refs(data.spec().n_refs);
  for (int b = 0; b < count; ++b) {
    SynthSample s = data.sample(start + b);
    lrs.push_back(std::move(s.lr));
    hrs.push_back(std::move(s.hr));
    for (int r = 0; r < data.spec().n_refs; ++r)
      refs[r].push_back(std::move(s.refs[r]));
  }
  Batch out;
  out.lr = stack_batch(lrs);
  out.hr = stack_batch(hrs);
  for (auto& r : refs) out.refs.push_back(stack_batch(r));
  return out;
}

void attach_flows(Batch& batch, int scale, const TrainOptions& opt) {
  for (const auto& ref : batch.refs) {
    Tensor ref_lr = make_lr(ref, scale);
    batch.flows.push_back(block_match_flow(ref_lr, batch.lr, opt.flow_radius,
                                           opt.flow_block, opt.flow_levels));
  }
}

std::string fmt_loss(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.8f", v);
  return b;
}

std::string fmt_psnr(double v) {
  if (std::isinf(v)) return "inf";
  char b[40];
  std::snprintf(b, sizeof b, "%.4f", v);
  return b;
}

struct Holdout {
  std::vector<Batch> items;  // batch-of-1 per sample
  double bicubic_psnr = 0;
};

Holdout build_holdout(const SynthSpec& spec, const ModelConfig& cfg,
                      const TrainOptions& opt) {
  SynthSpec hs = spec;
  hs.seed = spec.seed ^ 0x484f4c44ULL;  // independent evaluation list
  hs.flip = FlipMode::none;
  SynthDataset data(hs);
  Holdout out;
  double bp = 0;
  for (int i = 0; i < opt.holdout; ++i) {
    Batch b = gather_batch(data, i, 1);
    if (cfg.align == AlignChoice::large && cfg.n_refs > 0)
      attach_flows(b, cfg.scale, opt);
    bp += psnr(clamp_unit(bicubic_resize_forward(b.lr, double(cfg.scale))),
               b.hr);
    out.items.push_back(std::move(b));
  }
  out.bicubic_psnr = bp / std::max(1, opt.holdout);
  return out;
}

struct EvalResult {
  double psnr_mean = 0, ssim_mean = 0;
};

EvalResult evaluate(const Model& m, const Holdout& holdout) {
  EvalResult r;
  for (const auto& b : holdout.items) {
    Tensor sr = clamp_unit(
        sr_forward(m, b.lr, b.refs, b.flows.empty() ? nullptr : &b.flows));
    r.psnr_mean += psnr(sr, b.hr);
    r.ssim_mean += ssim(sr, b.hr);
  }
  const double n = double(holdout.items.size());
  r.psnr_mean /= n;
  r.ssim_mean /= n;
  return r;
}

}  // namespace

TrainResult train_toy(const ModelConfig& cfg, const SynthSpec& spec,
                      const TrainOptions& opt) {
  if (opt.iters < 1) throw ConfigError("iters must be >= 1");
  if (opt.batch < 1) throw ConfigError("batch must be >= 1");
  if (cfg.n_refs != spec.n_refs)
    throw ConfigError("model n_refs " + std::to_string(cfg.n_refs) +
                      " != dataset n_refs " + std::to_string(spec.n_refs));
  if (cfg.scale != spec.scale)
    throw ConfigError("model and dataset scale disagree");
  const bool need_flows = cfg.align == AlignChoice::large && cfg.n_refs > 0;
  if (need_flows && !opt.flow_enabled)
    throw ConfigError("large alignment requires a flow source");

  TrainResult result;
  result.model = make_model<float>(cfg);
  Model& model = result.model;
  SynthDataset data(spec);
  Holdout holdout = build_holdout(spec, cfg, opt);
  result.bicubic_psnr = holdout.bicubic_psnr;

  FrozenExtractorT<float> frozen;
  if (opt.loss == LossMode::perceptual)
    frozen = snapshot_lr_extractor(model);

  AdamConfig acfg;
  acfg.lr = opt.learn_rate;
  Adam adam(acfg);

  std::string csv = "iter,l_rec,l_cor,l_per,total,psnr_holdout\n";
  const std::string ckpt_path =
      opt.out_dir.empty() ? "" : opt.out_dir + "/checkpoint.hmc";

  for (int iter = 0; iter < opt.iters; ++iter) {
    Batch batch = gather_batch(data, std::int64_t(iter) * opt.batch, opt.batch);
    if (need_flows) attach_flows(batch, cfg.scale, opt);

    model.params.zero_grads();
    ForwardTrace<float> trace;
    Tensor sr = sr_forward(model, batch.lr, batch.refs,
                           batch.flows.empty() ? nullptr : &batch.flows,
                           &trace);

    auto rec = charbonnier(sr, batch.hr);
    float l_rec = rec.value, l_cor = 0.f, l_per = 0.f;
    Tensor d_sr = rec.vjp(opt.weights.rec);

    if (opt.loss != LossMode::rec) {
      auto cor = correlation_loss(sr, batch.hr, opt.corr_k, opt.corr_d);
      l_cor = cor.value;
      add_inplace(d_sr, cor.vjp(opt.weights.cor));
    }
    if (opt.loss == LossMode::perceptual) {
      BackFn<float> fe_back;
      Tensor fea_sr = frozen_extract(frozen, sr, &fe_back);
      Tensor fea_hr = frozen_extract(frozen, batch.hr);
      auto per = feature_l1(fea_sr, fea_hr);
      l_per = per.value;
      add_inplace(d_sr, fe_back(per.vjp(opt.weights.per)));
    }
    const float total = opt.weights.rec * l_rec + opt.weights.cor * l_cor +
                        opt.weights.per * l_per;

    if (!std::isfinite(total) || total > opt.divergence_limit) {
      result.aborted = true;
      result.abort_reason = "diverged at iter " + std::to_string(iter) +
                            " (total=" + fmt_loss(total) + ")";
      break;
    }

    trace.backward(d_sr);
    try {
      adam.step(model.params);
    } catch (const NumericError& e) {
      result.aborted = true;
      result.abort_reason = e.what();
      break;
    }
    result.total_history.push_back(total);

    const bool eval_now =
        (iter + 1) % opt.eval_every == 0 || iter + 1 == opt.iters;
    std::string psnr_field;
    if (eval_now) {
      EvalResult ev = evaluate(model, holdout);
      result.final_psnr = ev.psnr_mean;
      result.final_ssim = ev.ssim_mean;
      psnr_field = fmt_psnr(ev.psnr_mean);
      if (!opt.out_dir.empty()) {
        save_checkpoint(model, ckpt_path);
        if (opt.emit_images && !holdout.items.empty()) {
          const Batch& hb = holdout.items[0];
          Tensor sr0 = clamp_unit(sr_forward(
              model, hb.lr, hb.refs, hb.flows.empty() ? nullptr : &hb.flows));
          const std::string tag = std::to_string(iter + 1);
          save_image(sr0, opt.out_dir + "/sample_" + tag + "_sr.png");
          save_image(clamp_unit(bicubic_resize_forward(
                         hb.lr, double(cfg.scale))),
                     opt.out_dir + "/sample_" + tag + "_bicubic.png");
          save_image(hb.hr, opt.out_dir + "/sample_" + tag + "_gt.png");
        }
      }
    }
    csv += std::to_string(iter) + "," + fmt_loss(l_rec) + "," +
           fmt_loss(l_cor) + "," + fmt_loss(l_per) + "," + fmt_loss(total) +
           "," + psnr_field + "\n";
  }

  result.csv = csv;
  if (!opt.out_dir.empty())
    atomic_write_file(opt.out_dir + "/train_log.csv", csv);
  return result;
}

}  // namespace exsr
