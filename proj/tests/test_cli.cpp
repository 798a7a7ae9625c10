#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "exsr/image.hpp"
#include "exsr/model.hpp"
#include "exsr/resize.hpp"
#include "exsr/rng.hpp"
#include "exsr/synth.hpp"
#include "exsr/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace exsr;

namespace {

const std::string kCli = EXSR_CLI_PATH;
const std::string kDir = "/tmp/exsr_cli_test";

int run(const std::string& args, std::string* output = nullptr) {
  const std::string log = kDir + "/cmd_output.txt";
  const int status = std::system((kCli + " " + args + " >" + log + " 2>&1").c_str());
  if (output) *output = read_file(log);
  if (status == -1) return -1;
  return WEXITSTATUS(status);
}

struct DirSetup {
  DirSetup() {
    fs::remove_all(kDir);
    fs::create_directories(kDir);
  }
};

DirSetup setup_once;

Tensor synth_image(int size, std::uint64_t seed) {
  SynthSpec spec;
  spec.hr_size = size;
  spec.seed = seed;
  spec.n_refs = 0;
  return SynthDataset(spec).sample(0).hr;
}

}  // namespace

TEST_CASE("corrmap command") {
  const std::string img = kDir + "/corr_input.png";
  save_image(synth_image(32, 3), img);

  CHECK(run("corrmap --input " + img + " --k 3 --dilation 1 --out " + kDir +
            "/corr.png") == 0);
  CHECK(fs::exists(kDir + "/corr.png"));

  CHECK(run("corrmap --input " + img + " --k 4 --out " + kDir + "/bad.png") == 2);

  CHECK(run("corrmap --input " + img + " --k 1 --out " + kDir +
            "/corr1.png --raw " + kDir + "/corr1.htf") == 0);
  HtfAny raw = read_htf(kDir + "/corr1.htf");
  CHECK(raw.as_f32().c == 1);
}

TEST_CASE("metrics command") {
  const std::string a = kDir + "/metrics_a.png";
  save_image(synth_image(32, 5), a);
  std::string out;
  CHECK(run("metrics --a " + a + " --b " + a, &out) == 0);
  CHECK(out.find("psnr,ssim") != std::string::npos);
  CHECK(out.find("inf") != std::string::npos);
  CHECK(out.find("1.000000") != std::string::npos);

  const std::string small = kDir + "/metrics_small.png";
  save_image(Tensor(1, 3, 16, 16, 0.5f), small);
  CHECK(run("metrics --a " + a + " --b " + small) == 2);
}

TEST_CASE("flow command") {
  const std::string img = kDir + "/flow_src.png";
  save_image(synth_image(32, 7), img);
  CHECK(run("flow --src " + img + " --dst " + img + " --out " + kDir +
            "/flow.htf --radius 2 --block 8 --levels 1") == 0);
  Tensor flow = read_htf(kDir + "/flow.htf").as_f32();
  CHECK(flow.c == 2);
  for (float v : flow.data) CHECK(v == 0.0f);
}

TEST_CASE("gradcheck command") {
  std::string out;
  CHECK(run("gradcheck --op conv2d", &out) == 0);
  CHECK(out.find("conv2d") != std::string::npos);
  CHECK(out.find("pass") != std::string::npos);

  CHECK(run("gradcheck --op not_an_op", &out) == 2);
  CHECK(out.find("available") != std::string::npos);

  CHECK(run("gradcheck --op sigmoid --tolerance 1e-12") == 1);
}

TEST_CASE("unknown flags are errors") {
  CHECK(run("metrics --a x --b y --frobnicate") == 2);
  CHECK(run("nonexistent-subcommand") == 2);
}

TEST_CASE("infer with a zero-weight checkpoint reproduces bicubic") {
  ModelConfig cfg = toy_config();
  cfg.feat_width = 8;
  cfg.lr_blocks = 1;
  cfg.ref_blocks = 1;
  cfg.recon_blocks = 1;
  Model m = make_model<float>(cfg);
  m.params.for_each([](Param& p) {
    std::fill(p.value.data.begin(), p.value.data.end(), 0.0f);
  });
  const std::string ckpt = kDir + "/zero.hmc";
  save_checkpoint(m, ckpt);

  SynthSpec spec;
  spec.hr_size = 32;
  spec.scale = 4;
  spec.n_refs = 2;
  spec.seed = 13;
  SynthSample s = SynthDataset(spec).sample(0);
  const std::string lr_path = kDir + "/infer_lr.png";
  const std::string ref_path = kDir + "/infer_ref.png";
  const std::string gt_path = kDir + "/infer_gt.png";
  save_image(s.lr, lr_path);
  save_image(s.refs[0], ref_path);
  save_image(s.hr, gt_path);

  std::string out;
  CHECK(run("infer --checkpoint " + ckpt + " --lr " + lr_path + " --ref " +
                ref_path + " --out " + kDir + "/sr.png --gt " + gt_path,
            &out) == 0);
  CHECK(out.find("psnr=") != std::string::npos);

  Tensor sr = load_image(kDir + "/sr.png");
  Tensor expect = clamp_unit(bicubic_resize_forward(load_image(lr_path), 4.0));
  Tensor quantized(1, 3, 32, 32);
  for (std::size_t i = 0; i < expect.data.size(); ++i)
    quantized.data[i] =
        float(std::floor(expect.data[i] * 255.0f + 0.5f)) / 255.0f;
  CHECK(sr.data == quantized.data);

  // one ref and three refs both work on the same checkpoint
  CHECK(run("infer --checkpoint " + ckpt + " --lr " + lr_path + " --ref " +
            ref_path + " --ref " + ref_path + " --ref " + ref_path +
            " --out " + kDir + "/sr3.png") == 0);

  CHECK(run("infer --checkpoint " + kDir + "/missing.hmc --lr " + lr_path +
            " --out " + kDir + "/x.png") == 2);

  // flow count must match the reference count in large mode
  ModelConfig lcfg = cfg;
  lcfg.align = AlignChoice::large;
  Model lm = make_model<float>(lcfg);
  const std::string lckpt = kDir + "/large.hmc";
  save_checkpoint(lm, lckpt);
  write_htf(FlowField(1, 2, 8, 8, 0.0f), kDir + "/one.htf");
  CHECK(run("infer --checkpoint " + lckpt + " --lr " + lr_path + " --ref " +
            ref_path + " --ref " + ref_path + " --flow " + kDir +
            "/one.htf --out " + kDir + "/x.png") == 2);
  // without explicit flows block matching kicks in
  CHECK(run("infer --checkpoint " + lckpt + " --lr " + lr_path + " --ref " +
            ref_path + " --out " + kDir + "/sr_large.png") == 0);
}

TEST_CASE("train command smoke, ablation switches and determinism") {
  const std::string base = " train --iters 4 --batch 2 --refs 2 --feat 8 "
                           "--blocks-lr 1 --blocks-ref 1 --blocks-recon 1 "
                           "--hr-size 32 --holdout 2 --eval-every 2 --count 4";
  fs::create_directories(kDir + "/t1");
  fs::create_directories(kDir + "/t2");
  fs::create_directories(kDir + "/t3");
  fs::create_directories(kDir + "/t4");

  CHECK(run(base.substr(1) + " --out " + kDir + "/t1") == 0);
  CHECK(fs::exists(kDir + "/t1/checkpoint.hmc"));
  CHECK(fs::exists(kDir + "/t1/train_log.csv"));
  CHECK(fs::exists(kDir + "/t1/sample_2_sr.png"));

  // same seed, same flags: identical logs
  CHECK(run(base.substr(1) + " --out " + kDir + "/t2") == 0);
  CHECK(read_file(kDir + "/t1/train_log.csv") ==
        read_file(kDir + "/t2/train_log.csv"));

  // a different aggregation diverges from the cofa log
  CHECK(run(base.substr(1) + " --agg average --out " + kDir + "/t3") == 0);
  CHECK(read_file(kDir + "/t1/train_log.csv") !=
        read_file(kDir + "/t3/train_log.csv"));

  // the no-reference baseline runs
  CHECK(run("train --iters 2 --batch 2 --refs 0 --feat 8 --blocks-lr 1 "
            "--blocks-ref 1 --blocks-recon 1 --hr-size 32 --holdout 2 "
            "--eval-every 2 --count 4 --out " + kDir + "/t4") == 0);

  // large alignment without a flow source is a usage error
  CHECK(run(base.substr(1) + " --rfa large --flow-source none --out " + kDir +
            "/t1") == 2);
}

TEST_CASE("train config file merges under explicit flags") {
  fs::create_directories(kDir + "/tc");
  const std::string cfg_path = kDir + "/train_cfg.json";
  atomic_write_file(cfg_path,
                    "{\"iters\":3,\"refs\":2,\"feat\":8,\"blocks-lr\":1,"
                    "\"blocks-ref\":1,\"blocks-recon\":1,\"hr-size\":32,"
                    "\"holdout\":2,\"eval-every\":2,\"count\":4,\"batch\":2}");
  std::string out;
  CHECK(run("train --config " + cfg_path + " --out " + kDir + "/tc", &out) == 0);
  const std::string csv = read_file(kDir + "/tc/train_log.csv");
  CHECK(csv.find("\n2,") != std::string::npos);   // iter 2 present
  CHECK(csv.find("\n3,") == std::string::npos);   // only 3 iters ran

  // flags win over the config file
  CHECK(run("train --config " + cfg_path + " --iters 2 --out " + kDir + "/tc") == 0);
  CHECK(read_file(kDir + "/tc/train_log.csv").find("\n2,") == std::string::npos);

  atomic_write_file(cfg_path, "{\"bogus-key\":1}");
  CHECK(run("train --config " + cfg_path + " --out " + kDir + "/tc") == 2);
}
