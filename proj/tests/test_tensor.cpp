#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "exsr/rng.hpp"
#include "exsr/tensor.hpp"
#include "exsr/tensor_io.hpp"

using namespace exsr;

namespace {

TensorD rand_t(Rng& rng, int n, int c, int h, int w) {
  TensorD t(n, c, h, w);
  for (auto& v : t.data) v = rng.uniform(-1, 1);
  return t;
}

}  // namespace

TEST_CASE("tensor creation") {
  Tensor z(1, 1, 2, 2, 0.0f);
  CHECK(z.numel() == 4);
  for (float v : z.data) CHECK(v == 0.0f);

  Tensor t(1, 2, 1, 1, std::vector<float>{3, 5});
  CHECK(t.data[0] == 3.0f);
  CHECK(t.data[1] == 5.0f);

  CHECK_THROWS_AS(Tensor(1, 1, 2, 2, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST_CASE("elementwise add/mul basics") {
  Tensor a(1, 2, 1, 1, std::vector<float>{1, 2});
  Tensor b(1, 2, 1, 1, std::vector<float>{3, 4});
  Tensor r = ew(a, b, EwOp::add);
  CHECK(r.data[0] == 4.0f);
  CHECK(r.data[1] == 6.0f);

  Tensor x(1, 2, 2, 2, 0.7f);
  Tensor zeros(1, 2, 2, 2, 0.0f);
  auto prod = ew_binary(x, zeros, EwOp::mul);
  for (float v : prod.value.data) CHECK(v == 0.0f);
  Tensor cot(1, 2, 2, 2, 1.0f);
  auto grads = prod.vjp(cot);
  for (float v : grads[0].data) CHECK(v == 0.0f);  // d/dx = zeros

  Tensor bad(1, 2, 3, 3, 0.0f);
  CHECK_THROWS_AS(ew(Tensor(1, 2, 2, 2, 0.0f), bad, EwOp::add), ShapeError);
}

TEST_CASE("channel mean") {
  Tensor a(1, 1, 2, 2, std::vector<float>{1, 2, 3, 4});
  CHECK(channel_mean(a).data[0] == doctest::Approx(2.5));

  Tensor c(2, 3, 4, 4, 0.37f);
  for (float v : channel_mean(c).data) CHECK(v == doctest::Approx(0.37f));

  Tensor two(1, 2, 2, 2, std::vector<float>{0, 0, 0, 0, 1, 3, 5, 7});
  Tensor m = channel_mean(two);
  CHECK(m.data[0] == doctest::Approx(0.0));
  CHECK(m.data[1] == doctest::Approx(4.0));

  CHECK_THROWS_AS(channel_mean(Tensor(1, 1, 0, 0, 0.0f)), ShapeError);
}

TEST_CASE("activations") {
  Tensor z(1, 1, 1, 1, std::vector<float>{0});
  CHECK(apply_activation(z, ActKind::sigmoid).data[0] == doctest::Approx(0.5));

  Tensor r(1, 1, 1, 2, std::vector<float>{-1, 2});
  Tensor rr = apply_activation(r, ActKind::relu);
  CHECK(rr.data[0] == 0.0f);
  CHECK(rr.data[1] == 2.0f);

  auto sig = activation(z, ActKind::sigmoid);
  Tensor cot(1, 1, 1, 1, 1.0f);
  CHECK(sig.vjp(cot)[0].data[0] == doctest::Approx(0.25));
}

TEST_CASE("broadcast add then sum equals sum of parts") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    TensorD a = rand_t(rng, 2, 3, 4, 5);
    TensorD b = trial % 2 == 0 ? rand_t(rng, 1, 3, 1, 1) : rand_t(rng, 1, 1, 4, 5);
    const double lhs = sum_all(ew(a, b, EwOp::add));
    const double reps = trial % 2 == 0 ? 2 * 4 * 5 : 2 * 3;
    CHECK(lhs == doctest::Approx(sum_all(a) + reps * sum_all(b)).epsilon(1e-10));
  }
}

TEST_CASE("elementwise ops are deterministic") {
  Rng rng(5);
  TensorD a = rand_t(rng, 2, 4, 8, 8);
  TensorD b = rand_t(rng, 2, 4, 8, 8);
  TensorD r1 = ew(a, b, EwOp::mul);
  TensorD r2 = ew(a, b, EwOp::mul);
  CHECK(r1.data == r2.data);  // bit-identical
}

TEST_CASE("ew vjp sum-reduces over broadcast axes") {
  Rng rng(17);
  TensorD a = rand_t(rng, 2, 3, 2, 2);
  TensorD b = rand_t(rng, 1, 3, 1, 1);
  auto out = ew_binary(a, b, EwOp::sub);
  TensorD cot(2, 3, 2, 2, 1.0);
  auto g = out.vjp(cot);
  CHECK(g[0].same_shape(a));
  CHECK(g[1].same_shape(b));
  for (double v : g[1].data) CHECK(v == doctest::Approx(-8.0));  // N*H*W copies
}

TEST_CASE("param registry rejects duplicate ids") {
  ParamRegistry reg;
  reg.add("a.weight", Tensor(1, 1, 1, 1, 0.0f));
  CHECK_THROWS_AS(reg.add("a.weight", Tensor(1, 1, 1, 1, 0.0f)), ConfigError);
  CHECK(reg.find("a.weight") != nullptr);
  CHECK(reg.find("missing") == nullptr);
}

TEST_CASE("concat and slice channels") {
  Tensor a(1, 2, 1, 2, std::vector<float>{1, 2, 3, 4});
  Tensor b(1, 1, 1, 2, std::vector<float>{9, 8});
  Tensor c = concat_channels(a, b);
  CHECK(c.c == 3);
  CHECK(c.at(0, 2, 0, 0) == 9.0f);
  Tensor s = slice_channels(c, 1, 2);
  CHECK(s.at(0, 0, 0, 1) == 4.0f);
  CHECK(s.at(0, 1, 0, 0) == 9.0f);
}

TEST_CASE("HTF round-trip is bit-exact") {
  Rng rng(23);
  Tensor t(2, 3, 4, 5);
  for (auto& v : t.data) v = float(rng.uniform(-10, 10));
  const std::string path = "/tmp/exsr_test_tensor.htf";
  write_htf(t, path);
  HtfAny back = read_htf(path);
  REQUIRE(back.dtype == 0);
  CHECK(back.f32.same_shape(t));
  CHECK(back.f32.data == t.data);

  TensorD d(1, 2, 3, 3);
  for (auto& v : d.data) v = rng.uniform(-10, 10);
  write_htf(d, path);
  HtfAny back64 = read_htf(path);
  REQUIRE(back64.dtype == 1);
  CHECK(back64.f64.data == d.data);
  std::remove(path.c_str());
}

TEST_CASE("HTF rejects corrupt headers") {
  const std::string path = "/tmp/exsr_test_bad.htf";
  atomic_write_file(path, "NOTHTF??");
  CHECK_THROWS_AS(read_htf(path), FormatError);
  std::remove(path.c_str());
}
