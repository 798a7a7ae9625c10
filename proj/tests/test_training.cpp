#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "exsr/image.hpp"
#include "exsr/optim.hpp"
#include "exsr/synth.hpp"
#include "exsr/train.hpp"

using namespace exsr;

TEST_CASE("adam leaves parameters alone on zero gradients") {
  ParamRegistryT<double> reg;
  reg.add("w", TensorD(1, 1, 1, 2, {1.5, -2.5}));
  AdamT<double> adam;
  adam.step(reg);
  CHECK(adam.steps_taken() == 1);
  CHECK(reg.find("w")->value.data == std::vector<double>{1.5, -2.5});
}

TEST_CASE("adam first step moves by about lr in the gradient sign") {
  ParamRegistryT<double> reg;
  reg.add("w", TensorD(1, 1, 1, 3, {0.0, 0.0, 0.0}));
  AdamConfigT<double> cfg;
  cfg.lr = 1e-2;
  AdamT<double> adam(cfg);
  reg.find("w")->grad = TensorD(1, 1, 1, 3, {0.5, -1.25, 3.0});
  adam.step(reg);
  const auto& w = reg.find("w")->value.data;
  CHECK(std::fabs(w[0] + cfg.lr) < 0.01 * cfg.lr);
  CHECK(std::fabs(w[1] - cfg.lr) < 0.01 * cfg.lr);
  CHECK(std::fabs(w[2] + cfg.lr) < 0.01 * cfg.lr);
  // gradients were consumed
  for (double g : reg.find("w")->grad.data) CHECK(g == 0.0);
}

TEST_CASE("adam minimizes a quadratic") {
  // f(w) = (w-3)^2 from w=0, lr=0.1, 500 steps
  ParamRegistryT<double> reg;
  reg.add("w", TensorD(1, 1, 1, 1, {0.0}));
  AdamConfigT<double> cfg;
  cfg.lr = 0.1;
  AdamT<double> adam(cfg);
  for (int i = 0; i < 500; ++i) {
    const double w = reg.find("w")->value.data[0];
    reg.find("w")->grad.data[0] = 2.0 * (w - 3.0);
    adam.step(reg);
  }
  CHECK(std::fabs(reg.find("w")->value.data[0] - 3.0) < 0.05);
}

TEST_CASE("adam rejects NaN gradients naming the param") {
  ParamRegistryT<double> reg;
  reg.add("layer.weight", TensorD(1, 1, 1, 1, {0.0}));
  reg.find("layer.weight")->grad.data[0] = std::nan("");
  AdamT<double> adam;
  try {
    adam.step(reg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer.weight") != std::string::npos);
  }
}

TEST_CASE("adam step is nearly invariant to gradient rescaling") {
  auto first_step = [](double scale) {
    ParamRegistryT<double> reg;
    reg.add("w", TensorD(1, 1, 1, 1, {0.0}));
    AdamT<double> adam;
    reg.find("w")->grad.data[0] = 0.37 * scale;
    adam.step(reg);
    return reg.find("w")->value.data[0];
  };
  const double a = first_step(1.0), b = first_step(10.0);
  CHECK(std::fabs(a - b) / std::fabs(a) < 0.02);
}

TEST_CASE("synthetic references differ from the target") {
  SynthSpec spec;
  spec.seed = 3;
  SynthDataset data(spec);
  SynthSample s = data.sample(0);
  CHECK(s.lr.h == 16);
  CHECK(s.hr.h == 64);
  REQUIRE(s.refs.size() == 3);
  for (const auto& ref : s.refs) {
    double diff = 0;
    for (std::size_t i = 0; i < ref.data.size(); ++i)
      diff += std::fabs(double(ref.data[i]) - double(s.hr.data[i]));
    CHECK(diff / double(ref.numel()) > 0.0);
  }
}

TEST_CASE("synthetic stream is deterministic") {
  SynthSpec spec;
  spec.seed = 11;
  SynthDataset a(spec), b(spec);
  for (int i : {0, 1, 7}) {
    CHECK(a.sample(i).hr.data == b.sample(i).hr.data);
    CHECK(a.sample(i).lr.data == b.sample(i).lr.data);
  }
  // textures repeat with period `count`, transforms do not
  SynthSpec tiny = spec;
  tiny.count = 2;
  SynthDataset c(tiny);
  CHECK(c.sample(0).hr.data == c.sample(2).hr.data);
  CHECK(c.sample(0).refs[0].data != c.sample(2).refs[0].data);
}

TEST_CASE("even flip round-trips bit-exactly") {
  SynthSpec spec;
  spec.seed = 5;
  spec.flip = FlipMode::even;
  SynthDataset flipped(spec);
  SynthSpec plain = spec;
  plain.flip = FlipMode::none;
  SynthDataset unflipped(plain);
  int flips_seen = 0;
  for (int i = 0; i < 8; ++i) {
    SynthSample f = flipped.sample(i);
    SynthSample u = unflipped.sample(i);
    const bool was_flipped = f.hr.data != u.hr.data;
    flips_seen += was_flipped;
    if (was_flipped) {
      CHECK(flip_horizontal(f.hr).data == u.hr.data);
      CHECK(flip_horizontal(f.lr).data == u.lr.data);
      for (std::size_t r = 0; r < f.refs.size(); ++r)
        CHECK(flip_horizontal(f.refs[r]).data == u.refs[r].data);
    } else {
      CHECK(f.lr.data == u.lr.data);
    }
  }
  CHECK(flips_seen > 0);
}

TEST_CASE("uneven flip touches only one side") {
  SynthSpec spec;
  spec.seed = 17;
  spec.flip = FlipMode::uneven;
  SynthDataset flipped(spec);
  SynthSpec plain = spec;
  plain.flip = FlipMode::none;
  SynthDataset unflipped(plain);
  int lr_only = 0, ref_only = 0;
  for (int i = 0; i < 24; ++i) {
    SynthSample f = flipped.sample(i);
    SynthSample u = unflipped.sample(i);
    const bool lr_flipped = f.lr.data != u.lr.data;
    const bool ref_flipped = f.refs[0].data != u.refs[0].data;
    CHECK_FALSE((lr_flipped && ref_flipped));
    if (lr_flipped) {
      // LR and HR stay a consistent pair
      CHECK(flip_horizontal(f.hr).data == u.hr.data);
      ++lr_only;
    }
    if (ref_flipped) ++ref_only;
  }
  CHECK(lr_only > 0);
  CHECK(ref_only > 0);
}

namespace {

ModelConfig smoke_config() {
  ModelConfig cfg = toy_config();
  cfg.feat_width = 8;
  cfg.lr_blocks = 1;
  cfg.ref_blocks = 1;
  cfg.recon_blocks = 1;
  cfg.n_refs = 2;
  return cfg;
}

SynthSpec smoke_spec() {
  SynthSpec spec;
  spec.hr_size = 32;
  spec.scale = 4;
  spec.n_refs = 2;
  spec.count = 8;
  return spec;
}

TrainOptions smoke_options() {
  TrainOptions opt;
  opt.iters = 6;
  opt.batch = 2;
  opt.holdout = 2;
  opt.eval_every = 3;
  opt.emit_images = false;
  return opt;
}

}  // namespace

TEST_CASE("training runs, logs and is seed-deterministic") {
  auto r1 = train_toy(smoke_config(), smoke_spec(), smoke_options());
  auto r2 = train_toy(smoke_config(), smoke_spec(), smoke_options());
  CHECK_FALSE(r1.aborted);
  CHECK(r1.csv == r2.csv);
  CHECK(r1.total_history.size() == 6);
  CHECK(r1.csv.rfind("iter,l_rec,l_cor,l_per,total,psnr_holdout\n", 0) == 0);
  for (float v : r1.total_history) CHECK(std::isfinite(v));
}

TEST_CASE("zero learning rate freezes the loss sequence") {
  TrainOptions opt = smoke_options();
  opt.learn_rate = 0.0f;
  auto r = train_toy(smoke_config(), smoke_spec(), opt);
  // distinct batches, but rerunning yields the identical sequence
  auto r2 = train_toy(smoke_config(), smoke_spec(), opt);
  CHECK(r.total_history == r2.total_history);
  // with lr=0 the model never changes: repeating the same data (count=1
  // textures, batch covering it) keeps the loss constant across epochs
  SynthSpec spec = smoke_spec();
  spec.count = 2;
  spec.max_translate = 0;
  spec.max_rotate_deg = 0;
  spec.scale_lo = spec.scale_hi = 1.0;
  TrainOptions o2 = opt;
  o2.batch = 2;
  o2.iters = 4;
  auto r3 = train_toy(smoke_config(), spec, o2);
  for (std::size_t i = 1; i < r3.total_history.size(); ++i)
    CHECK(r3.total_history[i] == r3.total_history[0]);
}

TEST_CASE("correlation term changes the gradient") {
  ModelConfig cfg = smoke_config();
  SynthSpec spec = smoke_spec();
  SynthDataset data(spec);
  SynthSample s = data.sample(0);

  auto grads_with = [&](bool use_cor) {
    Model m = make_model<float>(cfg);
    m.params.zero_grads();
    ForwardTrace<float> trace;
    const std::vector<FlowField>* no_flows = nullptr;
    Tensor sr = sr_forward(m, s.lr, s.refs, no_flows, &trace);
    auto rec = charbonnier(sr, s.hr);
    Tensor d_sr = rec.vjp(1.0f);
    if (use_cor) {
      auto cor = correlation_loss(sr, s.hr, 3, 1);
      add_inplace(d_sr, cor.vjp(0.1f));
    }
    trace.backward(d_sr);
    double norm = 0;
    m.params.for_each([&](const Param& p) {
      for (float g : p.grad.data) norm += double(g) * g;
    });
    return std::sqrt(norm);
  };
  const double plain = grads_with(false);
  const double with_cor = grads_with(true);
  CHECK(std::fabs(plain - with_cor) > 1e-8);
}

TEST_CASE("training emits checkpoint and csv files") {
  namespace fs = std::filesystem;
  const std::string dir = "/tmp/exsr_train_smoke";
  fs::remove_all(dir);
  fs::create_directories(dir);
  TrainOptions opt = smoke_options();
  opt.out_dir = dir;
  opt.emit_images = true;
  auto r = train_toy(smoke_config(), smoke_spec(), opt);
  CHECK_FALSE(r.aborted);
  CHECK(fs::exists(dir + "/checkpoint.hmc"));
  CHECK(fs::exists(dir + "/train_log.csv"));
  CHECK(fs::exists(dir + "/sample_3_sr.png"));
  CHECK(fs::exists(dir + "/sample_3_bicubic.png"));
  CHECK(fs::exists(dir + "/sample_3_gt.png"));
  CHECK_FALSE(fs::exists(dir + "/checkpoint.hmc.tmp"));
  Model back = load_checkpoint(dir + "/checkpoint.hmc");
  CHECK(back.params.size() == make_model<float>(smoke_config()).params.size());
  fs::remove_all(dir);
}

TEST_CASE("large mode without a flow source is a configuration error") {
  ModelConfig cfg = smoke_config();
  cfg.align = AlignChoice::large;
  TrainOptions opt = smoke_options();
  opt.flow_enabled = false;
  CHECK_THROWS_AS(train_toy(cfg, smoke_spec(), opt), ConfigError);
  opt.flow_enabled = true;
  auto r = train_toy(cfg, smoke_spec(), opt);
  CHECK_FALSE(r.aborted);
}

TEST_CASE("mismatched model and dataset reference counts are rejected") {
  ModelConfig cfg = smoke_config();
  cfg.n_refs = 1;
  CHECK_THROWS_AS(train_toy(cfg, smoke_spec(), smoke_options()), ConfigError);
}
