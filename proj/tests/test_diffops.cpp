#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "exsr/conv.hpp"
#include "exsr/losses.hpp"
#include "exsr/rearrange.hpp"
#include "exsr/ref_kernels.hpp"
#include "exsr/resize.hpp"
#include "exsr/rng.hpp"
#include "exsr/sample.hpp"

using namespace exsr;

namespace {

TensorD rand_t(Rng& rng, int n, int c, int h, int w, double lo = -1,
               double hi = 1) {
  TensorD t(n, c, h, w);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

double max_abs_diff(const TensorD& a, const TensorD& b) {
  REQUIRE(a.same_shape(b));
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d 1x1 identity") {
  Rng rng(1);
  TensorD x = rand_t(rng, 1, 1, 3, 3);
  Conv2dParamsT<double> p{TensorD(1, 1, 1, 1, {1.0}), TensorD(1, 1, 1, 1, 0.0),
                          1, 0};
  TensorD y = conv2d_forward(x, p);
  CHECK(max_abs_diff(y, x) == 0.0);
}

TEST_CASE("conv2d box sum with zero padding") {
  TensorD x(1, 1, 3, 3, 1.0);
  Conv2dParamsT<double> p{TensorD(1, 1, 3, 3, 1.0), TensorD(1, 1, 1, 1, 0.0),
                          1, 1};
  TensorD y = conv2d_forward(x, p);
  CHECK(y.at(0, 0, 1, 1) == doctest::Approx(9.0));
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(4.0));
  CHECK(y.at(0, 0, 0, 2) == doctest::Approx(4.0));
  CHECK(y.at(0, 0, 2, 0) == doctest::Approx(4.0));
  CHECK(y.at(0, 0, 2, 2) == doctest::Approx(4.0));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(6.0));
}

TEST_CASE("conv2d channel mismatch is a shape error") {
  TensorD x(1, 2, 3, 3, 0.0);
  Conv2dParamsT<double> p{TensorD(1, 3, 3, 3, 0.0), TensorD(1, 1, 1, 1, 0.0),
                          1, 1};
  CHECK_THROWS_AS(conv2d_forward(x, p), ShapeError);
}

TEST_CASE("conv2d matches the serial reference, including stride") {
  Rng rng(2);
  for (int stride : {1, 2}) {
    TensorD x = rand_t(rng, 2, 3, 9, 7);
    Conv2dParamsT<double> p{rand_t(rng, 4, 3, 3, 3), rand_t(rng, 1, 4, 1, 1),
                            stride, 1};
    CHECK(max_abs_diff(conv2d_forward(x, p), ref::conv2d(x, p)) < 1e-12);
  }
}

TEST_CASE("conv2d backward matches the serial reference") {
  Rng rng(3);
  TensorD x = rand_t(rng, 2, 3, 6, 6);
  Conv2dParamsT<double> p{rand_t(rng, 4, 3, 3, 3), rand_t(rng, 1, 4, 1, 1), 1, 1};
  auto out = conv2d(x, p);
  TensorD dy = rand_t(rng, out.value.n, out.value.c, out.value.h, out.value.w);
  auto g = out.vjp(dy);
  auto gr = ref::conv2d_backward(x, p, dy);
  CHECK(max_abs_diff(g.x, gr.x) < 1e-12);
  CHECK(max_abs_diff(g.weight, gr.weight) < 1e-12);
  CHECK(max_abs_diff(g.bias, gr.bias) < 1e-12);
}

TEST_CASE("residual block reduces to identity with zero weights") {
  Rng rng(4);
  TensorD x = rand_t(rng, 1, 4, 5, 5);
  Conv2dParamsT<double> z{TensorD(4, 4, 3, 3, 0.0), TensorD(1, 4, 1, 1, 0.0),
                          1, 1};
  TensorD y = residual_block(x, z, z).value;
  CHECK(max_abs_diff(y, x) == 0.0);

  TensorD zero_in(1, 4, 5, 5, 0.0);
  Conv2dParamsT<double> w{rand_t(rng, 4, 4, 3, 3), TensorD(1, 4, 1, 1, 0.0), 1,
                          1};
  TensorD out = residual_block(zero_in, w, w).value;
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("space_to_depth ordering and inverses") {
  TensorD x(1, 1, 2, 2, {1, 2, 3, 4});  // [[a,b],[c,d]]
  TensorD y = space_to_depth(x, 2).value;
  CHECK(y.c == 4);
  CHECK(y.h == 1);
  CHECK(y.data == std::vector<double>{1, 2, 3, 4});

  Rng rng(5);
  TensorD r = rand_t(rng, 2, 3, 6, 4);
  CHECK(space_to_depth(r, 1).value.data == r.data);  // r=1 identity
  TensorD back = pixel_shuffle(space_to_depth(r, 2).value, 2).value;
  CHECK(back.data == r.data);  // exact inverse pair

  // permutations preserve the value multiset
  TensorD s = space_to_depth(r, 2).value;
  auto a = r.data;
  auto b = s.data;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);

  CHECK_THROWS_AS(space_to_depth(TensorD(1, 1, 3, 3, 0.0), 2), ShapeError);
}

TEST_CASE("pixel_shuffle ordering") {
  TensorD x(1, 4, 1, 1, {1, 2, 3, 4});
  TensorD y = pixel_shuffle(x, 2).value;
  CHECK(y.h == 2);
  CHECK(y.at(0, 0, 0, 0) == 1);
  CHECK(y.at(0, 0, 0, 1) == 2);
  CHECK(y.at(0, 0, 1, 0) == 3);
  CHECK(y.at(0, 0, 1, 1) == 4);

  Rng rng(6);
  TensorD r = rand_t(rng, 1, 4, 3, 3);
  CHECK(pixel_shuffle(r, 1).value.data == r.data);
  CHECK_THROWS_AS(pixel_shuffle(TensorD(1, 3, 2, 2, 0.0), 2), ShapeError);
}

TEST_CASE("icnr init makes shuffle equal nearest-neighbor upsampling") {
  Rng rng(7);
  TensorD w = icnr_init<double>(8, 3, 3, 2, rng);
  // sub-kernel = every r^2-th output filter
  TensorD sub(2, 3, 3, 3);
  for (int c = 0; c < 2; ++c)
    for (int ci = 0; ci < 3; ++ci)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          sub.at(c, ci, ky, kx) = w.at(c * 4, ci, ky, kx);

  TensorD x = rand_t(rng, 1, 3, 5, 5);
  Conv2dParamsT<double> big{w, TensorD(1, 8, 1, 1, 0.0), 1, 1};
  Conv2dParamsT<double> small{sub, TensorD(1, 2, 1, 1, 0.0), 1, 1};
  TensorD lhs = pixel_shuffle(conv2d_forward(x, big), 2).value;
  TensorD rhs = nearest_up(conv2d_forward(x, small), 2);
  CHECK(lhs.data == rhs.data);  // replicated filters, bitwise equal
}

TEST_CASE("icnr with r=1 is the plain base init") {
  Rng a(9), b(9);
  TensorD w1 = icnr_init<double>(6, 3, 3, 1, a);
  TensorD w2 = fanin_uniform<double>(6, 3, 3, b);
  CHECK(w1.data == w2.data);
  CHECK_THROWS_AS(icnr_init<double>(6, 3, 3, 2, a), ShapeError);
}

TEST_CASE("bilinear warp identities") {
  Rng rng(8);
  TensorD x = rand_t(rng, 1, 2, 4, 4);
  TensorD zero_flow(1, 2, 4, 4, 0.0);
  CHECK(max_abs_diff(bilinear_warp(x, zero_flow).value, x) == 0.0);

  // constant flow dx=1 on a row shifts with zero fill
  TensorD row(1, 1, 1, 4, {0, 1, 2, 3});
  TensorD flow(1, 2, 1, 4, 0.0);
  for (int i = 0; i < 4; ++i) flow.at(0, 1, 0, i) = 1.0;
  TensorD shifted = bilinear_warp(row, flow).value;
  CHECK(shifted.data == std::vector<double>{1, 2, 3, 0});
}

TEST_CASE("bilinear warp is exact for in-bounds integer flows") {
  Rng rng(9);
  TensorD x = rand_t(rng, 1, 3, 6, 6);
  TensorD flow(1, 2, 6, 6, 0.0);
  for (int y = 0; y < 6; ++y)
    for (int xx = 0; xx < 6; ++xx) {
      flow.at(0, 0, y, xx) = double(int(rng.below(3)) - 1);
      flow.at(0, 1, y, xx) = double(int(rng.below(3)) - 1);
    }
  TensorD out = bilinear_warp(x, flow).value;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 6; ++y)
      for (int xx = 0; xx < 6; ++xx) {
        const int sy = y + int(flow.at(0, 0, y, xx));
        const int sx = xx + int(flow.at(0, 1, y, xx));
        const double expect =
            (sy >= 0 && sy < 6 && sx >= 0 && sx < 6) ? x.at(0, c, sy, sx) : 0.0;
        CHECK(out.at(0, c, y, xx) == expect);
      }
}

TEST_CASE("bilinear warp matches the serial reference") {
  Rng rng(10);
  TensorD x = rand_t(rng, 2, 3, 7, 5);
  TensorD flow = rand_t(rng, 2, 2, 7, 5, -2.5, 2.5);
  CHECK(max_abs_diff(bilinear_warp(x, flow).value, ref::bilinear_warp(x, flow)) <
        1e-12);
}

TEST_CASE("deformable conv with zero offsets equals conv2d") {
  Rng rng(11);
  TensorD x = rand_t(rng, 1, 3, 6, 6);
  Conv2dParamsT<double> p{rand_t(rng, 4, 3, 3, 3), rand_t(rng, 1, 4, 1, 1), 1, 1};
  TensorD off(1, 18, 6, 6, 0.0);
  CHECK(max_abs_diff(deformable_conv_forward(x, p, off), conv2d_forward(x, p)) <
        1e-12);
}

TEST_CASE("deformable conv with K=1 identity weight equals bilinear warp") {
  Rng rng(12);
  const int c = 2;
  TensorD x = rand_t(rng, 1, c, 5, 5);
  TensorD w(c, c, 1, 1, 0.0);
  for (int i = 0; i < c; ++i) w.at(i, i, 0, 0) = 1.0;
  Conv2dParamsT<double> p{w, TensorD(1, c, 1, 1, 0.0), 1, 0};
  TensorD flow = rand_t(rng, 1, 2, 5, 5, -1.5, 1.5);
  CHECK(max_abs_diff(deformable_conv_forward(x, p, flow),
                     bilinear_warp(x, flow).value) < 1e-12);
}

TEST_CASE("deformable conv matches the serial reference") {
  Rng rng(13);
  TensorD x = rand_t(rng, 2, 3, 6, 6);
  Conv2dParamsT<double> p{rand_t(rng, 4, 3, 3, 3), rand_t(rng, 1, 4, 1, 1), 1, 1};
  TensorD off = rand_t(rng, 2, 18, 6, 6, -1.8, 1.8);
  CHECK(max_abs_diff(deformable_conv_forward(x, p, off),
                     ref::deformable_conv(x, p, off)) < 1e-12);
}

TEST_CASE("deformable conv rejects bad offset shapes") {
  TensorD x(1, 2, 4, 4, 0.0);
  Conv2dParamsT<double> p{TensorD(2, 2, 3, 3, 0.0), TensorD(1, 2, 1, 1, 0.0),
                          1, 1};
  CHECK_THROWS_AS(deformable_conv_forward(x, p, TensorD(1, 6, 4, 4, 0.0)),
                  ShapeError);
}

TEST_CASE("bicubic kernel weights sum to one at any phase") {
  Rng rng(14);
  for (int i = 0; i < 100; ++i) {
    const double f = rng.uniform(0, 1);
    const double s = cubic_weight(-1 - f) + cubic_weight(-f) +
                     cubic_weight(1 - f) + cubic_weight(2 - f);
    CHECK(std::fabs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("bicubic identities") {
  Rng rng(15);
  TensorD x = rand_t(rng, 1, 3, 5, 7);
  CHECK(max_abs_diff(bicubic_resize_forward(x, 1.0), x) == 0.0);

  TensorD c(1, 2, 6, 6, 0.77);
  for (double scale : {2.0, 0.5, 3.0}) {
    TensorD y = bicubic_resize_forward(c, scale);
    for (double v : y.data) CHECK(v == doctest::Approx(0.77).epsilon(1e-12));
  }
  CHECK_THROWS_AS(bicubic_resize_forward(x, -1.0), ParamError);
  CHECK_THROWS_AS(bicubic_resize_forward(x, 0.4), ParamError);  // 1/0.4 not integer
  CHECK_THROWS_AS(bicubic_resize_forward(x, 1.0 / 3.0), ShapeError);  // 5,7 % 3
}

TEST_CASE("bicubic 2x upscale reproduces a linear ramp in the interior") {
  TensorD ramp(1, 1, 4, 8);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) ramp.at(0, 0, y, x) = double(x);
  TensorD up = bicubic_resize_forward(ramp, 2.0);
  // interior columns follow the half-pixel ramp (x_out+0.5)/2-0.5
  for (int y = 2; y < 6; ++y)
    for (int x = 4; x < 12; ++x)
      CHECK(up.at(0, 0, y, x) ==
            doctest::Approx((x + 0.5) / 2.0 - 0.5).epsilon(1e-12));
}

TEST_CASE("bicubic matches the serial reference") {
  Rng rng(16);
  TensorD x = rand_t(rng, 1, 3, 8, 12);
  for (double scale : {2.0, 4.0, 0.5, 0.25}) {
    TensorD a = bicubic_resize_forward(x, scale);
    TensorD b = ref::bicubic_resize(x, scale);
    CHECK(max_abs_diff(a, b) < 1e-12);
  }
}

TEST_CASE("correlation map matches the serial reference") {
  Rng rng(17);
  TensorD img = rand_t(rng, 2, 3, 7, 6, 0, 1);
  for (auto [k, d] : {std::pair{3, 1}, {5, 1}, {3, 2}}) {
    TensorD a = exsr::correlation_map_forward(img, k, d);
    TensorD b = ref::correlation_map(img, k, d);
    CHECK(max_abs_diff(a, b) < 1e-12);
  }
}
