#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <png.h>

#include <cmath>
#include <cstdio>

#include "exsr/image.hpp"
#include "exsr/losses.hpp"
#include "exsr/resize.hpp"
#include "exsr/tensor_io.hpp"
#include "exsr/rng.hpp"
#include "exsr/synth.hpp"

using namespace exsr;

namespace {

Tensor rand_8bit_image(Rng& rng, int c, int h, int w) {
  Tensor t(1, c, h, w);
  for (auto& v : t.data) v = float(rng.below(256)) / 255.0f;
  return t;
}

void write_16bit_png(const std::string& path, int h, int w) {
  FILE* f = std::fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_init_io(png, f);
  png_set_IHDR(png, info, w, h, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(std::size_t(w) * 2, 0x42);
  for (int y = 0; y < h; ++y) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

double laplacian_energy(const Tensor& img) {
  double acc = 0;
  std::size_t count = 0;
  for (int c = 0; c < img.c; ++c)
    for (int y = 1; y < img.h - 1; ++y)
      for (int x = 1; x < img.w - 1; ++x) {
        const double l = 4.0 * img.at(0, c, y, x) - img.at(0, c, y - 1, x) -
                         img.at(0, c, y + 1, x) - img.at(0, c, y, x - 1) -
                         img.at(0, c, y, x + 1);
        acc += std::fabs(l);
        ++count;
      }
  return acc / double(count);
}

}  // namespace

TEST_CASE("png round trip is lossless for 8-bit data") {
  Rng rng(1);
  for (int c : {1, 3}) {
    Tensor img = rand_8bit_image(rng, c, 13, 17);
    const std::string path = "/tmp/exsr_img_test.png";
    save_image(img, path);
    Tensor back = load_image(path);
    CHECK(back.same_shape(img));
    CHECK(back.data == img.data);
    std::remove(path.c_str());
  }
}

TEST_CASE("ppm and pgm round trips") {
  Rng rng(2);
  Tensor rgb = rand_8bit_image(rng, 3, 6, 9);
  save_image(rgb, "/tmp/exsr_img_test.ppm");
  CHECK(load_image("/tmp/exsr_img_test.ppm").data == rgb.data);
  std::remove("/tmp/exsr_img_test.ppm");

  Tensor gray = rand_8bit_image(rng, 1, 7, 5);
  save_image(gray, "/tmp/exsr_img_test.pgm");
  CHECK(load_image("/tmp/exsr_img_test.pgm").data == gray.data);
  std::remove("/tmp/exsr_img_test.pgm");
}

TEST_CASE("16-bit png is rejected with a format error") {
  const std::string path = "/tmp/exsr_img_16bit.png";
  write_16bit_png(path, 4, 4);
  CHECK_THROWS_AS(load_image(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("unknown format names the header bytes") {
  const std::string path = "/tmp/exsr_img_garbage.bin";
  atomic_write_file(path, "GARBAGE!");
  try {
    load_image(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("47 41 52") != std::string::npos);  // GAR
  }
  std::remove(path.c_str());
}

TEST_CASE("saving clamps out-of-range values") {
  Tensor t(1, 1, 1, 2, std::vector<float>{1.2f, -0.4f});
  const std::string path = "/tmp/exsr_img_clamp.png";
  save_image(t, path);
  Tensor back = load_image(path);
  CHECK(back.data[0] == 1.0f);
  CHECK(back.data[1] == 0.0f);
  std::remove(path.c_str());
}

TEST_CASE("psnr closed forms") {
  Tensor a(1, 3, 4, 4, 0.25f);
  CHECK(std::isinf(psnr(a, a)));

  Tensor b = a;
  for (auto& v : b.data) v += 0.1f;  // MSE = 0.01
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK_THROWS_AS(psnr(a, Tensor(1, 3, 2, 2, 0.f)), ShapeError);
}

TEST_CASE("ssim identities") {
  Rng rng(3);
  Tensor a = rand_8bit_image(rng, 3, 16, 16);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

  Tensor inv = a;
  for (auto& v : inv.data) v = 1.0f - v;
  CHECK(ssim(a, inv) < 1.0);
  CHECK(ssim(a, inv) == doctest::Approx(ssim(inv, a)).epsilon(1e-12));

  CHECK_THROWS_AS(ssim(Tensor(1, 1, 8, 8, 0.f), Tensor(1, 1, 8, 8, 0.f)),
                  ParamError);
}

TEST_CASE("make_lr shape and constants") {
  Rng rng(4);
  Tensor hr(1, 3, 64, 64, 0.6f);
  Tensor lr = make_lr(hr, 4);
  CHECK(lr.h == 16);
  CHECK(lr.w == 16);
  for (float v : lr.data) CHECK(v == doctest::Approx(0.6f).epsilon(1e-6));
  CHECK_THROWS_AS(make_lr(Tensor(1, 3, 30, 30, 0.f), 4), ShapeError);
}

TEST_CASE("band-limited images survive the LR round trip") {
  // smooth low-frequency content only: downsample then upsample stays close
  const int s = 64;
  Tensor img(1, 3, s, s);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x)
        img.at(0, c, y, x) =
            0.5f + 0.3f * std::sin(2 * 3.14159265f * (x + 2 * c) / 32.0f) *
                       std::cos(2 * 3.14159265f * y / 32.0f);
  Tensor lr = make_lr(img, 4);
  Tensor up = bicubic_resize_forward(lr, 4.0);
  CHECK(psnr(up, img) > 35.0);
}

TEST_CASE("make_lr commutes with horizontal flip") {
  Rng rng(5);
  Tensor hr = rand_8bit_image(rng, 3, 32, 32);
  Tensor a = make_lr(flip_horizontal(hr), 4);
  Tensor b = flip_horizontal(make_lr(hr, 4));
  for (std::size_t i = 0; i < a.data.size(); ++i)
    CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-6));
}

TEST_CASE("corrmap visualization of a uniform map is mid-color") {
  CorrelationMap zero(1, 9, 8, 8, 0.0f);
  Tensor img = corrmap_render(zero);
  for (float v : img.data) CHECK(v == 1.0f);  // white everywhere

  // chains from correlation_map: constant image -> all-zero map
  Tensor flat(1, 3, 8, 8, 0.77f);
  CorrelationMap m = correlation_map_forward(flat, 3, 1);
  Tensor img2 = corrmap_render(m);
  CHECK(img2.data == img.data);
}

TEST_CASE("larger correlation windows render smoother maps") {
  SynthSpec spec;
  spec.seed = 9;
  spec.hr_size = 64;
  SynthDataset data(spec);
  Tensor tex = data.sample(0).hr;
  Tensor v3 = corrmap_render(correlation_map_forward(tex, 3, 1));
  Tensor v7 = corrmap_render(correlation_map_forward(tex, 7, 1));
  CHECK(laplacian_energy(v7) < laplacian_energy(v3));

  const std::string p3 = "/tmp/exsr_cm3.png", p7 = "/tmp/exsr_cm7.png";
  corrmap_visualize(correlation_map_forward(tex, 3, 1), p3);
  corrmap_visualize(correlation_map_forward(tex, 7, 1), p7);
  CHECK(load_image(p3).data != load_image(p7).data);
  std::remove(p3.c_str());
  std::remove(p7.c_str());
}
