#include "exsr/gradcheck.hpp"

#include <cmath>
#include <memory>

#include "exsr/align.hpp"
#include "exsr/conv.hpp"
#include "exsr/losses.hpp"
#include "exsr/model.hpp"
#include "exsr/rearrange.hpp"
#include "exsr/resize.hpp"
#include "exsr/rng.hpp"
#include "exsr/sample.hpp"

namespace exsr {

namespace {

TensorD rand_t(Rng& rng, int n, int c, int h, int w, double lo = -1.0,
               double hi = 1.0) {
  TensorD t(n, c, h, w);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Magnitudes in [0.1, cap], random sign: keeps relu/bilinear kinks and
// integer sampling positions away from the finite-difference step.
TensorD rand_gapped(Rng& rng, int n, int c, int h, int w, double cap) {
  TensorD t(n, c, h, w);
  for (auto& v : t.data)
    v = (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.1, cap);
  return t;
}

double dot(const TensorD& a, const TensorD& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

TensorD scalar_tensor(double v) { return TensorD(1, 1, 1, 1, {v}); }

// Adapt a scalar loss (vjp over its first argument) to the tensor contract.
DiffOutT<double> wrap_scalar(const ScalarLossOutT<double>& s) {
  DiffOutT<double> out;
  out.value = scalar_tensor(s.value);
  out.vjp = [vjp = s.vjp](const TensorD& cot) {
    return std::vector<TensorD>{vjp(cot.data[0])};
  };
  return out;
}

}  // namespace

double directional_check(const CheckSetup& setup, std::uint64_t seed) {
  Rng rng(seed);
  auto base = setup.op(setup.inputs);
  TensorD u = rand_t(rng, base.value.n, base.value.c, base.value.h,
                     base.value.w);
  auto cots = base.vjp(u);
  if (cots.size() != setup.inputs.size())
    throw ParamError("vjp returned " + std::to_string(cots.size()) +
                     " cotangents for " + std::to_string(setup.inputs.size()) +
                     " inputs");
  const double h = 1e-5;
  double worst = 0;
  for (std::size_t i = 0; i < setup.inputs.size(); ++i) {
    TensorD dir = rand_t(rng, setup.inputs[i].n, setup.inputs[i].c,
                         setup.inputs[i].h, setup.inputs[i].w);
    const double analytic = dot(cots[i], dir);
    auto shifted = setup.inputs;
    shifted[i] = setup.inputs[i];
    for (std::size_t j = 0; j < dir.data.size(); ++j)
      shifted[i].data[j] += h * dir.data[j];
    const double lp = dot(u, setup.op(shifted).value);
    for (std::size_t j = 0; j < dir.data.size(); ++j)
      shifted[i].data[j] -= 2 * h * dir.data[j];
    const double lm = dot(u, setup.op(shifted).value);
    const double numeric = (lp - lm) / (2 * h);
    const double rel = std::fabs(analytic - numeric) /
                       std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

namespace {

// ---- elementwise / tensor-core cases ----

CheckSetup case_ew(Rng& rng, EwOp op, int variant) {
  CheckSetup s;
  TensorD a = rand_t(rng, 1, 3, 4, 4);
  TensorD b = variant == 0   ? rand_t(rng, 1, 3, 4, 4)
              : variant == 1 ? rand_t(rng, 1, 3, 1, 1)
                             : rand_t(rng, 1, 1, 4, 4);
  s.inputs = {a, b};
  s.op = [op](const std::vector<TensorD>& in) {
    return ew_binary(in[0], in[1], op);
  };
  return s;
}

CheckSetup case_channel_mean(Rng& rng) {
  CheckSetup s;
  s.inputs = {rand_t(rng, 1, 3, 5, 5)};
  s.op = [](const std::vector<TensorD>& in) { return channel_mean_op(in[0]); };
  return s;
}

CheckSetup case_activation(Rng& rng, ActKind kind) {
  CheckSetup s;
  s.inputs = {rand_gapped(rng, 1, 3, 5, 5, 2.0)};
  s.op = [kind](const std::vector<TensorD>& in) {
    return activation(in[0], kind);
  };
  return s;
}

// ---- structural ops ----

CheckSetup case_conv2d(Rng& rng) {
  CheckSetup s;
  s.inputs = {rand_t(rng, 1, 3, 6, 6), rand_t(rng, 4, 3, 3, 3),
              rand_t(rng, 1, 4, 1, 1)};
  s.op = [](const std::vector<TensorD>& in) {
    Conv2dParamsT<double> p{in[1], in[2], 1, 1};
    auto r = conv2d(in[0], p);
    DiffOutT<double> out;
    out.value = r.value;
    out.vjp = [vjp = r.vjp](const TensorD& dy) {
      auto g = vjp(dy);
      return std::vector<TensorD>{g.x, g.weight, g.bias};
    };
    return out;
  };
  return s;
}

CheckSetup case_residual_block(Rng& rng) {
  CheckSetup s;
  s.inputs = {rand_t(rng, 1, 4, 5, 5), rand_t(rng, 4, 4, 3, 3),
              rand_t(rng, 1, 4, 1, 1), rand_t(rng, 4, 4, 3, 3),
              rand_t(rng, 1, 4, 1, 1)};
  s.op = [](const std::vector<TensorD>& in) {
    Conv2dParamsT<double> p1{in[1], in[2], 1, 1};
    Conv2dParamsT<double> p2{in[3], in[4], 1, 1};
    auto r = residual_block(in[0], p1, p2);
    DiffOutT<double> out;
    out.value = r.value;
    out.vjp = [vjp = r.vjp](const TensorD& dy) {
      auto g = vjp(dy);
      return std::vector<TensorD>{g.x, g.w1, g.b1, g.w2, g.b2};
    };
    return out;
  };
  return s;
}

CheckSetup case_space_to_depth(Rng& rng) {
  CheckSetup s;
  s.inputs = {rand_t(rng, 1, 3, 6, 6)};
  s.op = [](const std::vector<TensorD>& in) { return space_to_depth(in[0], 2); };
  return s;
}

CheckSetup case_pixel_shuffle(Rng& rng) {
  CheckSetup s;
  s.inputs = {rand_t(rng, 1, 8, 3, 3)};
  s.op = [](const std::vector<TensorD>& in) { return pixel_shuffle(in[0], 2); };
  return s;
}

CheckSetup case_bilinear_warp(Rng& rng) {
  CheckSetup s;
  s.inputs = {rand_t(rng, 1, 2, 5, 5), rand_gapped(rng, 1, 2, 5, 5, 1.4)};
  s.op = [](const std::vector<TensorD>& in) {
    auto r = bilinear_warp(in[0], in[1]);
    DiffOutT<double> out;
    out.value = r.value;
    out.vjp = [vjp = r.vjp](const TensorD& dy) {
      auto g = vjp(dy);
      return std::vector<TensorD>{g.x, g.flow};
    };
    return out;
  };
  return s;
}

CheckSetup case_deformable_conv(Rng& rng) {
  CheckSetup s;
  s.inputs = {rand_t(rng, 1, 2, 5, 5), rand_t(rng, 3, 2, 3, 3),
              rand_t(rng, 1, 3, 1, 1), rand_gapped(rng, 1, 18, 5, 5, 1.4)};
  s.op = [](const std::vector<TensorD>& in) {
    Conv2dParamsT<double> p{in[1], in[2], 1, 1};
    auto r = deformable_conv(in[0], p, in[3]);
    DiffOutT<double> out;
    out.value = r.value;
    out.vjp = [vjp = r.vjp](const TensorD& dy) {
      auto g = vjp(dy);
      return std::vector<TensorD>{g.x, g.weight, g.bias, g.offsets};
    };
    return out;
  };
  return s;
}

CheckSetup case_bicubic(Rng& rng) {
  CheckSetup s;
  s.inputs = {rand_t(rng, 1, 2, 4, 4)};
  s.op = [](const std::vector<TensorD>& in) {
    return bicubic_resize(in[0], 2.0);
  };
  return s;
}

// ---- losses ----

CheckSetup case_charbonnier(Rng& rng) {
  CheckSetup s;
  TensorD hr = rand_t(rng, 1, 3, 4, 4, 0.0, 1.0);
  s.inputs = {rand_t(rng, 1, 3, 4, 4, 0.0, 1.0)};
  s.op = [hr](const std::vector<TensorD>& in) {
    return wrap_scalar(charbonnier(in[0], hr, 1e-3));
  };
  return s;
}

CheckSetup case_correlation_map(Rng& rng) {
  CheckSetup s;
  s.inputs = {rand_t(rng, 1, 3, 5, 5, 0.0, 1.0)};
  s.op = [](const std::vector<TensorD>& in) {
    return correlation_map(in[0], 3, 1);
  };
  return s;
}

CheckSetup case_correlation_loss(Rng& rng) {
  // keep every correlation-map difference away from the L1 kink
  TensorD sr, hr;
  double best_gap = -1;
  for (int attempt = 0; attempt < 200; ++attempt) {
    TensorD a = rand_t(rng, 1, 3, 5, 5, 0.0, 1.0);
    TensorD b = rand_t(rng, 1, 3, 5, 5, 0.0, 1.0);
    TensorD ma = correlation_map_forward(a, 3, 1);
    TensorD mb = correlation_map_forward(b, 3, 1);
    double gap = 1e30;
    for (std::size_t i = 0; i < ma.data.size(); ++i)
      gap = std::min(gap, std::fabs(ma.data[i] - mb.data[i]));
    if (gap > best_gap) {
      best_gap = gap;
      sr = a;
      hr = b;
    }
    if (best_gap >= 1e-3) break;
  }
  CheckSetup s;
  s.inputs = {sr};
  s.op = [hr](const std::vector<TensorD>& in) {
    return wrap_scalar(correlation_loss(in[0], hr, 3, 1));
  };
  return s;
}

CheckSetup case_feature_l1(Rng& rng) {
  TensorD a = rand_t(rng, 1, 4, 4, 4);
  TensorD b = a;
  for (auto& v : b.data) v += (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.05, 0.5);
  CheckSetup s;
  s.inputs = {a};
  s.op = [b](const std::vector<TensorD>& in) {
    return wrap_scalar(feature_l1(in[0], b));
  };
  return s;
}

// ---- alignment ----

CheckSetup case_rfa(Rng& rng, AlignMode mode) {
  const int cf = 4, k = 3;
  CheckSetup s;
  s.inputs = {rand_t(rng, 1, cf, 6, 6),          // f_ref
              rand_t(rng, 1, cf, 6, 6),          // f_lr
              rand_t(rng, cf, 2 * cf, 3, 3),     // offset1 w
              rand_t(rng, 1, cf, 1, 1),          // offset1 b
              rand_t(rng, 2 * k * k, cf, 3, 3),  // offset2 w
              rand_t(rng, 1, 2 * k * k, 1, 1),   // offset2 b
              rand_t(rng, cf, cf, 3, 3),         // dconv w
              rand_t(rng, 1, cf, 1, 1)};         // dconv b
  std::shared_ptr<FlowFieldT<double>> flow;
  if (mode == AlignMode::large)
    flow = std::make_shared<FlowFieldT<double>>(rand_gapped(rng, 1, 2, 6, 6, 1.2));
  s.op = [mode, flow](const std::vector<TensorD>& in) {
    AlignParamsT<double> p;
    p.offset1 = {in[2], in[3], 1, 1};
    p.offset2 = {in[4], in[5], 1, 1};
    p.dconv = {in[6], in[7], 1, 1};
    p.mode = mode;
    auto r = rfa_align(in[0], in[1], flow.get(), p);
    DiffOutT<double> out;
    out.value = r.value;
    out.vjp = [vjp = r.vjp](const TensorD& dy) {
      auto g = vjp(dy);
      return std::vector<TensorD>{g.f_ref,     g.f_lr,      g.offset1_w,
                                  g.offset1_b, g.offset2_w, g.offset2_b,
                                  g.dconv_w,   g.dconv_b};
    };
    return out;
  };
  return s;
}

CheckSetup case_similarity(Rng& rng) {
  const int cf = 4;
  CheckSetup s;
  s.inputs = {rand_t(rng, 1, cf, 5, 5), rand_t(rng, 1, cf, 5, 5),
              rand_t(rng, cf, cf, 1, 1), rand_t(rng, 1, cf, 1, 1),
              rand_t(rng, cf, cf, 1, 1), rand_t(rng, 1, cf, 1, 1)};
  s.op = [](const std::vector<TensorD>& in) {
    SimilarityParamsT<double> p;
    p.g1 = {in[2], in[3], 1, 0};
    p.g2 = {in[4], in[5], 1, 0};
    auto r = similarity_score(in[0], in[1], p);
    DiffOutT<double> out;
    out.value = r.value;
    out.vjp = [vjp = r.vjp](const TensorD& dy) {
      auto g = vjp(dy);
      return std::vector<TensorD>{g.f_ref_a, g.f_lr, g.g1_w,
                                  g.g1_b,    g.g2_w, g.g2_b};
    };
    return out;
  };
  return s;
}

CheckSetup case_cofa(Rng& rng) {
  const int ns = 3;
  CheckSetup s;
  for (int i = 0; i < ns; ++i) s.inputs.push_back(rand_t(rng, 1, 3, 4, 4));
  for (int i = 0; i < ns; ++i)
    s.inputs.push_back(rand_t(rng, 1, 1, 4, 4, 0.1, 0.9));
  s.op = [ns](const std::vector<TensorD>& in) {
    std::vector<TensorD> f(in.begin(), in.begin() + ns);
    std::vector<TensorD> sc(in.begin() + ns, in.end());
    auto r = cofa_aggregate(f, sc);
    DiffOutT<double> out;
    out.value = r.value;
    out.vjp = [vjp = r.vjp](const TensorD& dy) {
      auto g = vjp(dy);
      std::vector<TensorD> all = g.features;
      all.insert(all.end(), g.scores.begin(), g.scores.end());
      return all;
    };
    return out;
  };
  return s;
}

CheckSetup case_aggregate(Rng& rng, AggMode kind) {
  const int ns = 3;
  CheckSetup s;
  for (int i = 0; i < ns; ++i) s.inputs.push_back(rand_t(rng, 1, 3, 4, 4));
  s.op = [kind](const std::vector<TensorD>& in) {
    auto r = aggregate_baseline(in, kind);
    DiffOutT<double> out;
    out.value = r.value;
    out.vjp = [vjp = r.vjp](const TensorD& dy) { return vjp(dy).features; };
    return out;
  };
  return s;
}

// ---- model stages ----

ModelConfig stage_config() {
  ModelConfig cfg;
  cfg.scale = 2;
  cfg.n_refs = 1;
  cfg.lr_blocks = 1;
  cfg.ref_blocks = 1;
  cfg.recon_blocks = 1;
  cfg.feat_width = 4;
  cfg.seed = 7;
  return cfg;
}

enum class Stage { lr, ref, recon };

CheckSetup case_stage(Rng& rng, Stage stage) {
  auto cfg = stage_config();
  auto model = std::make_shared<ModelT<double>>(make_model<double>(cfg));
  std::string prefix = stage == Stage::lr     ? "lr_extract."
                       : stage == Stage::ref ? "ref_extract."
                                             : "recon.";
  std::vector<std::string> ids;
  for (const auto& id : model->params.ids())
    if (id.rfind(prefix, 0) == 0) ids.push_back(id);

  CheckSetup s;
  TensorD x = stage == Stage::ref   ? rand_t(rng, 1, 3, 12, 12, 0.0, 1.0)
              : stage == Stage::lr ? rand_t(rng, 1, 3, 6, 6, 0.0, 1.0)
                                   : rand_t(rng, 1, 4, 6, 6);
  s.inputs.push_back(x);
  for (const auto& id : ids) s.inputs.push_back(model->params.find(id)->value);

  s.op = [model, ids, stage](const std::vector<TensorD>& in) {
    for (std::size_t i = 0; i < ids.size(); ++i)
      model->params.find(ids[i])->value = in[1 + i];
    BackFn<double> back;
    TensorD y;
    switch (stage) {
      case Stage::lr: y = extract_lr(*model, in[0], &back); break;
      case Stage::ref: y = extract_ref(*model, in[0], &back); break;
      default: y = reconstruct(*model, in[0], &back); break;
    }
    DiffOutT<double> out;
    out.value = y;
    out.vjp = [model, ids, back](const TensorD& dy) {
      model->params.zero_grads();
      std::vector<TensorD> g{back(dy)};
      for (const auto& id : ids) g.push_back(model->params.find(id)->grad);
      return g;
    };
    return out;
  };
  return s;
}

double run_setup(CheckSetup (*make)(Rng&), std::uint64_t seed) {
  Rng rng(seed);
  auto setup = make(rng);
  return directional_check(setup, seed ^ 0x5bd1e995);
}

}  // namespace

double model_end_to_end_check(std::uint64_t seed, int probes) {
  ModelConfig cfg = toy_config();
  cfg.seed = seed;
  auto m = make_model<double>(cfg);
  Rng rng(seed ^ 0xabcdef12345ULL);
  const TensorD i_lr = rand_t(rng, 1, 3, 8, 8, 0.0, 1.0);
  std::vector<TensorD> refs{rand_t(rng, 1, 3, 32, 32, 0.0, 1.0),
                            rand_t(rng, 1, 3, 32, 32, 0.0, 1.0)};
  const TensorD hr = rand_t(rng, 1, 3, 32, 32, 0.0, 1.0);

  auto loss_of = [&]() {
    TensorD sr = sr_forward(m, i_lr, refs);
    return charbonnier(sr, hr).value + 0.1 * correlation_loss(sr, hr, 3, 1).value;
  };

  m.params.zero_grads();
  ForwardTrace<double> trace;
  const std::vector<FlowFieldT<double>>* no_flows = nullptr;
  TensorD sr = sr_forward(m, i_lr, refs, no_flows, &trace);
  auto rec = charbonnier(sr, hr);
  auto cor = correlation_loss(sr, hr, 3, 1);
  TensorD d_sr = rec.vjp(1.0);
  add_inplace(d_sr, cor.vjp(0.1));
  trace.backward(d_sr);

  const auto ids = m.params.ids();
  const double h = 1e-5;
  double worst = 0;
  for (int probe = 0; probe < probes; ++probe) {
    const auto& id = ids[rng.below(ids.size())];
    ParamT<double>* p = m.params.find(id);
    const std::size_t i = std::size_t(rng.below(p->value.numel()));
    const double saved = p->value.data[i];
    p->value.data[i] = saved + h;
    const double lp = loss_of();
    p->value.data[i] = saved - h;
    const double lm = loss_of();
    p->value.data[i] = saved;
    const double numeric = (lp - lm) / (2 * h);
    const double analytic = p->grad.data[i];
    const double rel = std::fabs(analytic - numeric) /
                       std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

const std::vector<std::string>& differentiable_op_names() {
  static const std::vector<std::string> names = {
      "ew_add",          "ew_sub",         "ew_mul",
      "channel_mean",    "relu",           "sigmoid",
      "conv2d",          "residual_block", "space_to_depth",
      "pixel_shuffle",   "bilinear_warp",  "deformable_conv",
      "bicubic_resize",  "charbonnier",    "correlation_map",
      "correlation_loss", "feature_l1",    "rfa_align_small",
      "rfa_align_large", "similarity_score", "cofa_aggregate",
      "aggregate_average", "aggregate_maxpool", "extract_lr",
      "extract_ref",     "reconstruct",    "model_end_to_end"};
  return names;
}

const std::vector<GradCheckCase>& gradcheck_cases() {
  static const std::vector<GradCheckCase> cases = [] {
    std::vector<GradCheckCase> cs;
    auto add = [&](const std::string& op, double tol,
                   std::function<double(std::uint64_t)> fn) {
      cs.push_back({op, tol, std::move(fn)});
    };
    add("ew_add", 1e-4, [](std::uint64_t s) {
      Rng rng(s);
      auto setup = case_ew(rng, EwOp::add, int(s % 3));
      return directional_check(setup, s ^ 0x51ULL);
    });
    add("ew_sub", 1e-4, [](std::uint64_t s) {
      Rng rng(s);
      auto setup = case_ew(rng, EwOp::sub, 0);
      return directional_check(setup, s ^ 0x52ULL);
    });
    add("ew_mul", 1e-4, [](std::uint64_t s) {
      Rng rng(s);
      auto setup = case_ew(rng, EwOp::mul, int(s % 3));
      return directional_check(setup, s ^ 0x53ULL);
    });
    add("channel_mean", 1e-4,
        [](std::uint64_t s) { return run_setup(case_channel_mean, s); });
    add("relu", 1e-4, [](std::uint64_t s) {
      Rng rng(s);
      auto setup = case_activation(rng, ActKind::relu);
      return directional_check(setup, s ^ 0x54ULL);
    });
    add("sigmoid", 1e-4, [](std::uint64_t s) {
      Rng rng(s);
      auto setup = case_activation(rng, ActKind::sigmoid);
      return directional_check(setup, s ^ 0x55ULL);
    });
    add("conv2d", 1e-4,
        [](std::uint64_t s) { return run_setup(case_conv2d, s); });
    add("residual_block", 1e-4,
        [](std::uint64_t s) { return run_setup(case_residual_block, s); });
    add("space_to_depth", 1e-10,
        [](std::uint64_t s) { return run_setup(case_space_to_depth, s); });
    add("pixel_shuffle", 1e-10,
        [](std::uint64_t s) { return run_setup(case_pixel_shuffle, s); });
    add("bilinear_warp", 1e-4,
        [](std::uint64_t s) { return run_setup(case_bilinear_warp, s); });
    add("deformable_conv", 1e-4,
        [](std::uint64_t s) { return run_setup(case_deformable_conv, s); });
    add("bicubic_resize", 1e-10,
        [](std::uint64_t s) { return run_setup(case_bicubic, s); });
    add("charbonnier", 1e-4,
        [](std::uint64_t s) { return run_setup(case_charbonnier, s); });
    add("correlation_map", 1e-4,
        [](std::uint64_t s) { return run_setup(case_correlation_map, s); });
    add("correlation_loss", 1e-4,
        [](std::uint64_t s) { return run_setup(case_correlation_loss, s); });
    add("feature_l1", 1e-4,
        [](std::uint64_t s) { return run_setup(case_feature_l1, s); });
    add("rfa_align_small", 1e-4, [](std::uint64_t s) {
      Rng rng(s);
      auto setup = case_rfa(rng, AlignMode::small);
      return directional_check(setup, s ^ 0x56ULL);
    });
    add("rfa_align_large", 1e-4, [](std::uint64_t s) {
      Rng rng(s);
      auto setup = case_rfa(rng, AlignMode::large);
      return directional_check(setup, s ^ 0x57ULL);
    });
    add("similarity_score", 1e-4,
        [](std::uint64_t s) { return run_setup(case_similarity, s); });
    add("cofa_aggregate", 1e-4,
        [](std::uint64_t s) { return run_setup(case_cofa, s); });
    add("aggregate_average", 1e-4, [](std::uint64_t s) {
      Rng rng(s);
      auto setup = case_aggregate(rng, AggMode::average);
      return directional_check(setup, s ^ 0x58ULL);
    });
    add("aggregate_maxpool", 1e-4, [](std::uint64_t s) {
      Rng rng(s);
      auto setup = case_aggregate(rng, AggMode::maxpool);
      return directional_check(setup, s ^ 0x59ULL);
    });
    add("extract_lr", 1e-4, [](std::uint64_t s) {
      Rng rng(s);
      auto setup = case_stage(rng, Stage::lr);
      return directional_check(setup, s ^ 0x5aULL);
    });
    add("extract_ref", 1e-4, [](std::uint64_t s) {
      Rng rng(s);
      auto setup = case_stage(rng, Stage::ref);
      return directional_check(setup, s ^ 0x5bULL);
    });
    add("reconstruct", 1e-4, [](std::uint64_t s) {
      Rng rng(s);
      auto setup = case_stage(rng, Stage::recon);
      return directional_check(setup, s ^ 0x5cULL);
    });
    add("model_end_to_end", 1e-3,
        [](std::uint64_t s) { return model_end_to_end_check(s); });
    return cs;
  }();
  return cases;
}

GradCheckReport run_gradcheck(const std::string& op_filter,
                              double tol_override, std::uint64_t seed) {
  const auto& cases = gradcheck_cases();
  if (!op_filter.empty()) {
    bool known = false;
    for (const auto& c : cases) known |= (c.op == op_filter);
    if (!known) {
      std::string msg = "unknown op '" + op_filter + "'; available:";
      for (const auto& c : cases) msg += " " + c.op;
      throw ParamError(msg);
    }
  }
  GradCheckReport report;
  for (const auto& c : cases) {
    if (!op_filter.empty() && c.op != op_filter) continue;
    GradCheckRow row;
    row.op = c.op;
    row.tol = tol_override > 0 ? tol_override : c.tol;
    row.rel_err = c.max_rel_err(seed);
    row.pass = row.rel_err <= row.tol;
    report.all_pass &= row.pass;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace exsr
