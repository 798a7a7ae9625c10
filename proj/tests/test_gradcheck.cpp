#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "exsr/conv.hpp"
#include "exsr/gradcheck.hpp"
#include "exsr/rng.hpp"

using namespace exsr;

TEST_CASE("every differentiable op has a registered check") {
  const auto& names = differentiable_op_names();
  const auto& cases = gradcheck_cases();
  for (const auto& n : names) {
    bool found = false;
    for (const auto& c : cases) found |= (c.op == n);
    CHECK_MESSAGE(found, "missing gradcheck case for op ", n);
  }
  for (const auto& c : cases) {
    bool listed = std::find(names.begin(), names.end(), c.op) != names.end();
    CHECK_MESSAGE(listed, "case ", c.op, " not in the op list");
  }
}

TEST_CASE("the full suite passes at its default tolerances") {
  GradCheckReport report = run_gradcheck("", 0, 1);
  for (const auto& r : report.rows)
    CHECK_MESSAGE(r.pass, r.op, " rel err ", r.rel_err, " tol ", r.tol);
  CHECK(report.all_pass);
}

TEST_CASE("a corrupted vjp fails the check") {
  Rng rng(123);
  CheckSetup setup;
  TensorD x(1, 2, 5, 5), w(3, 2, 3, 3), b(1, 3, 1, 1, 0.0);
  for (auto& v : x.data) v = rng.uniform(-1, 1);
  for (auto& v : w.data) v = rng.uniform(-1, 1);
  setup.inputs = {x, w, b};
  setup.op = [](const std::vector<TensorD>& in) {
    Conv2dParamsT<double> p{in[1], in[2], 1, 1};
    auto r = conv2d(in[0], p);
    DiffOutT<double> out;
    out.value = r.value;
    out.vjp = [vjp = r.vjp](const TensorD& dy) {
      auto g = vjp(dy);
      for (auto& v : g.x.data) v *= 1.01;  // the deliberate corruption
      return std::vector<TensorD>{g.x, g.weight, g.bias};
    };
    return out;
  };
  CHECK(directional_check(setup, 7) > 1e-4);
}

TEST_CASE("unknown op names are rejected with the available list") {
  try {
    run_gradcheck("no_such_op", 0, 1);
    FAIL("expected ParamError");
  } catch (const ParamError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("no_such_op") != std::string::npos);
    CHECK(msg.find("conv2d") != std::string::npos);
  }
}

TEST_CASE("an impossible tolerance fails nonlinear ops") {
  GradCheckReport report = run_gradcheck("sigmoid", 1e-12, 1);
  REQUIRE(report.rows.size() == 1);
  CHECK_FALSE(report.rows[0].pass);
  CHECK_FALSE(report.all_pass);
}

TEST_CASE("filtered runs produce a single row") {
  GradCheckReport report = run_gradcheck("deformable_conv", 0, 1);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].op == "deformable_conv");
  CHECK(report.rows[0].pass);
}
