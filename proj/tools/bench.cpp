// Timing comparison between the serial reference kernels and the OpenMP
// implementations, plus a max-abs-diff agreement check per kernel.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "exsr/conv.hpp"
#include "exsr/losses.hpp"
#include "exsr/ref_kernels.hpp"
#include "exsr/resize.hpp"
#include "exsr/rng.hpp"
#include "exsr/sample.hpp"

namespace {

using exsr::Rng;
using exsr::TensorD;

TensorD rand_t(Rng& rng, int n, int c, int h, int w, double lo = -1,
               double hi = 1) {
  TensorD t(n, c, h, w);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

double max_abs_diff(const TensorD& a, const TensorD& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms,
            double diff) {
  std::printf("%-18s serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   max|diff| %.3e\n",
              name, serial_ms, parallel_ms, serial_ms / parallel_ms, diff);
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 3;
  std::printf("threads: %d, reps: %d\n", omp_get_max_threads(), reps);
  Rng rng(42);

  {
    TensorD x = rand_t(rng, 2, 32, 96, 96);
    exsr::Conv2dParamsT<double> p{rand_t(rng, 32, 32, 3, 3),
                                  rand_t(rng, 1, 32, 1, 1), 1, 1};
    TensorD ys, yp;
    double ts = time_ms([&] { ys = exsr::ref::conv2d(x, p); }, reps);
    double tp = time_ms([&] { yp = exsr::conv2d_forward(x, p); }, reps);
    report("conv2d fwd", ts, tp, max_abs_diff(ys, yp));

    TensorD dy = rand_t(rng, 2, 32, 96, 96);
    exsr::ConvGradsT<double> gs, gp;
    ts = time_ms([&] { gs = exsr::ref::conv2d_backward(x, p, dy); }, reps);
    auto out = exsr::conv2d(x, p);
    tp = time_ms([&] { gp = out.vjp(dy); }, reps);
    const double d = std::max({max_abs_diff(gs.x, gp.x),
                               max_abs_diff(gs.weight, gp.weight),
                               max_abs_diff(gs.bias, gp.bias)});
    report("conv2d bwd", ts, tp, d);
  }

  {
    TensorD x = rand_t(rng, 1, 16, 96, 96);
    exsr::Conv2dParamsT<double> p{rand_t(rng, 16, 16, 3, 3),
                                  rand_t(rng, 1, 16, 1, 1), 1, 1};
    TensorD off = rand_t(rng, 1, 18, 96, 96, -1.5, 1.5);
    TensorD ys, yp;
    double ts = time_ms([&] { ys = exsr::ref::deformable_conv(x, p, off); }, reps);
    double tp = time_ms([&] { yp = exsr::deformable_conv_forward(x, p, off); }, reps);
    report("deformable fwd", ts, tp, max_abs_diff(ys, yp));
  }

  {
    TensorD x = rand_t(rng, 1, 16, 256, 256);
    TensorD flow = rand_t(rng, 1, 2, 256, 256, -3, 3);
    TensorD ys, yp;
    double ts = time_ms([&] { ys = exsr::ref::bilinear_warp(x, flow); }, reps);
    double tp = time_ms([&] { yp = exsr::bilinear_warp(x, flow).value; }, reps);
    report("bilinear_warp", ts, tp, max_abs_diff(ys, yp));
  }

  {
    TensorD img = rand_t(rng, 1, 3, 256, 256, 0, 1);
    TensorD ys, yp;
    double ts = time_ms([&] { ys = exsr::ref::correlation_map(img, 5, 1); }, reps);
    double tp = time_ms([&] { yp = exsr::correlation_map_forward(img, 5, 1); }, reps);
    report("correlation_map", ts, tp, max_abs_diff(ys, yp));
  }

  {
    TensorD img = rand_t(rng, 1, 3, 128, 128, 0, 1);
    TensorD ys, yp;
    double ts = time_ms([&] { ys = exsr::ref::bicubic_resize(img, 4.0); }, reps);
    double tp = time_ms([&] { yp = exsr::bicubic_resize_forward(img, 4.0); }, reps);
    report("bicubic x4", ts, tp, max_abs_diff(ys, yp));
  }

  return 0;
}
