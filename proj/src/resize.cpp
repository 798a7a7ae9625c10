#include "exsr/resize.hpp"

#include <array>
#include <cmath>

#include "exsr/parallel.hpp"

namespace exsr {

double cubic_weight(double t) {
  t = std::fabs(t);
  if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
  if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
  return 0.0;
}

namespace {

template <class T>
struct AxisPlan {
  std::vector<std::array<int, 4>> taps;  // clamped source indices
  std::vector<std::array<T, 4>> wts;
};

// Half-pixel mapping: src = (out + 0.5)/scale - 0.5, four taps around it.
template <class T>
AxisPlan<T> plan_axis(int in_len, int out_len, double scale) {
  AxisPlan<T> plan;
  plan.taps.resize(out_len);
  plan.wts.resize(out_len);
  for (int o = 0; o < out_len; ++o) {
    const double src = (o + 0.5) / scale - 0.5;
    const int base = int(std::floor(src));
    for (int j = 0; j < 4; ++j) {
      const int tap = base - 1 + j;
      plan.taps[o][j] = tap < 0 ? 0 : (tap >= in_len ? in_len - 1 : tap);
      plan.wts[o][j] = T(cubic_weight(src - tap));
    }
  }
  return plan;
}

// Resample the W axis of every (n,c,y) row.
template <class T>
TensorT<T> apply_w(const TensorT<T>& x, const AxisPlan<T>& plan, int ow) {
  TensorT<T> out(x.n, x.c, x.h, ow);
  parallel_for(std::int64_t(x.n) * x.c * x.h, [&](std::int64_t row) {
    const T* src = x.data.data() + row * x.w;
    T* dst = out.data.data() + row * ow;
    for (int o = 0; o < ow; ++o) {
      const auto& t = plan.taps[o];
      const auto& w = plan.wts[o];
      dst[o] = w[0] * src[t[0]] + w[1] * src[t[1]] + w[2] * src[t[2]] +
               w[3] * src[t[3]];
    }
  });
  return out;
}

template <class T>
TensorT<T> apply_h(const TensorT<T>& x, const AxisPlan<T>& plan, int oh) {
  TensorT<T> out(x.n, x.c, oh, x.w);
  parallel_for(std::int64_t(x.n) * x.c, [&](std::int64_t plane) {
    const T* src = x.data.data() + plane * std::size_t(x.h) * x.w;
    T* dst = out.data.data() + plane * std::size_t(oh) * x.w;
    for (int o = 0; o < oh; ++o) {
      const auto& t = plan.taps[o];
      const auto& w = plan.wts[o];
      const T* r0 = src + std::size_t(t[0]) * x.w;
      const T* r1 = src + std::size_t(t[1]) * x.w;
      const T* r2 = src + std::size_t(t[2]) * x.w;
      const T* r3 = src + std::size_t(t[3]) * x.w;
      T* d = dst + std::size_t(o) * x.w;
      for (int ix = 0; ix < x.w; ++ix)
        d[ix] = w[0] * r0[ix] + w[1] * r1[ix] + w[2] * r2[ix] + w[3] * r3[ix];
    }
  });
  return out;
}

// Transposes of the two passes: scatter each output row back through its taps.
template <class T>
TensorT<T> apply_w_t(const TensorT<T>& dy, const AxisPlan<T>& plan, int iw) {
  TensorT<T> out(dy.n, dy.c, dy.h, iw, T(0));
  parallel_for(std::int64_t(dy.n) * dy.c * dy.h, [&](std::int64_t row) {
    const T* src = dy.data.data() + row * dy.w;
    T* dst = out.data.data() + row * iw;
    for (int o = 0; o < dy.w; ++o) {
      const auto& t = plan.taps[o];
      const auto& w = plan.wts[o];
      for (int j = 0; j < 4; ++j) dst[t[j]] += w[j] * src[o];
    }
  });
  return out;
}

template <class T>
TensorT<T> apply_h_t(const TensorT<T>& dy, const AxisPlan<T>& plan, int ih) {
  TensorT<T> out(dy.n, dy.c, ih, dy.w, T(0));
  parallel_for(std::int64_t(dy.n) * dy.c, [&](std::int64_t plane) {
    const T* src = dy.data.data() + plane * std::size_t(dy.h) * dy.w;
    T* dst = out.data.data() + plane * std::size_t(ih) * dy.w;
    for (int o = 0; o < dy.h; ++o) {
      const auto& t = plan.taps[o];
      const auto& w = plan.wts[o];
      const T* s = src + std::size_t(o) * dy.w;
      for (int j = 0; j < 4; ++j) {
        T* d = dst + std::size_t(t[j]) * dy.w;
        for (int ix = 0; ix < dy.w; ++ix) d[ix] += w[j] * s[ix];
      }
    }
  });
  return out;
}

void check_scale(double scale, int h, int w) {
  if (!(scale > 0.0)) throw ParamError("bicubic scale must be positive");
  if (scale < 1.0) {
    const double inv = 1.0 / scale;
    const double r = std::round(inv);
    if (std::fabs(inv - r) > 1e-9)
      throw ParamError("bicubic downscale factor must be integer, got 1/" +
                       std::to_string(inv));
    if (h % int(r) != 0 || w % int(r) != 0)
      throw ShapeError("image not divisible by downscale factor " +
                       std::to_string(int(r)));
  }
}

}  // namespace

template <class T>
TensorT<T> bicubic_resize_forward(const TensorT<T>& x, double scale) {
  check_scale(scale, x.h, x.w);
  const int oh = int(std::floor(scale * x.h + 1e-9));
  const int ow = int(std::floor(scale * x.w + 1e-9));
  auto ph = plan_axis<T>(x.h, oh, scale);
  auto pw = plan_axis<T>(x.w, ow, scale);
  return apply_h(apply_w(x, pw, ow), ph, oh);
}

template <class T>
DiffOutT<T> bicubic_resize(const TensorT<T>& x, double scale) {
  check_scale(scale, x.h, x.w);
  const int ih = x.h, iw = x.w;
  const int oh = int(std::floor(scale * x.h + 1e-9));
  const int ow = int(std::floor(scale * x.w + 1e-9));
  auto ph = plan_axis<T>(ih, oh, scale);
  auto pw = plan_axis<T>(iw, ow, scale);
  DiffOutT<T> out;
  out.value = apply_h(apply_w(x, pw, ow), ph, oh);
  out.vjp = [ph, pw, ih, iw](const TensorT<T>& dy) {
    return std::vector<TensorT<T>>{apply_w_t(apply_h_t(dy, ph, ih), pw, iw)};
  };
  return out;
}

#define EXSR_INSTANTIATE(T)                                               \
  template TensorT<T> bicubic_resize_forward<T>(const TensorT<T>&, double); \
  template DiffOutT<T> bicubic_resize<T>(const TensorT<T>&, double);

EXSR_INSTANTIATE(float)
EXSR_INSTANTIATE(double)
#undef EXSR_INSTANTIATE

}  // namespace exsr
