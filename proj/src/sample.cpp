#include "exsr/sample.hpp"

#include <cmath>

#include "exsr/parallel.hpp"

namespace exsr {

namespace {

template <class T>
inline T bilerp(const T* plane, int h, int w, T y, T x) {
  if (y <= T(-1) || y >= T(h) || x <= T(-1) || x >= T(w)) return T(0);
  const int y0 = int(std::floor(y)), x0 = int(std::floor(x));
  const T ly = y - T(y0), lx = x - T(x0);
  const T hy = T(1) - ly, hx = T(1) - lx;
  T v00 = T(0), v01 = T(0), v10 = T(0), v11 = T(0);
  if (y0 >= 0) {
    if (x0 >= 0) v00 = plane[y0 * w + x0];
    if (x0 + 1 < w) v01 = plane[y0 * w + x0 + 1];
  }
  if (y0 + 1 < h) {
    if (x0 >= 0) v10 = plane[(y0 + 1) * w + x0];
    if (x0 + 1 < w) v11 = plane[(y0 + 1) * w + x0 + 1];
  }
  return hy * hx * v00 + hy * lx * v01 + ly * hx * v10 + ly * lx * v11;
}

// Spatial derivative of the bilinear surface at (y,x); zero outside bounds.
template <class T>
inline void bilerp_grad_pos(const T* plane, int h, int w, T y, T x, T& gy,
                            T& gx) {
  gy = gx = T(0);
  if (y <= T(-1) || y >= T(h) || x <= T(-1) || x >= T(w)) return;
  const int y0 = int(std::floor(y)), x0 = int(std::floor(x));
  const T ly = y - T(y0), lx = x - T(x0);
  const T hy = T(1) - ly, hx = T(1) - lx;
  T v00 = T(0), v01 = T(0), v10 = T(0), v11 = T(0);
  if (y0 >= 0) {
    if (x0 >= 0) v00 = plane[y0 * w + x0];
    if (x0 + 1 < w) v01 = plane[y0 * w + x0 + 1];
  }
  if (y0 + 1 < h) {
    if (x0 >= 0) v10 = plane[(y0 + 1) * w + x0];
    if (x0 + 1 < w) v11 = plane[(y0 + 1) * w + x0 + 1];
  }
  gy = hx * (v10 - v00) + lx * (v11 - v01);
  gx = hy * (v01 - v00) + ly * (v11 - v10);
}

// Scatter g into the four taps around (y,x).
template <class T>
inline void bilerp_scatter(T* plane, int h, int w, T y, T x, T g) {
  if (y <= T(-1) || y >= T(h) || x <= T(-1) || x >= T(w)) return;
  const int y0 = int(std::floor(y)), x0 = int(std::floor(x));
  const T ly = y - T(y0), lx = x - T(x0);
  const T hy = T(1) - ly, hx = T(1) - lx;
  if (y0 >= 0) {
    if (x0 >= 0) plane[y0 * w + x0] += hy * hx * g;
    if (x0 + 1 < w) plane[y0 * w + x0 + 1] += hy * lx * g;
  }
  if (y0 + 1 < h) {
    if (x0 >= 0) plane[(y0 + 1) * w + x0] += ly * hx * g;
    if (x0 + 1 < w) plane[(y0 + 1) * w + x0 + 1] += ly * lx * g;
  }
}

template <class T>
void check_flow(const TensorT<T>& x, const FlowFieldT<T>& flow) {
  if (flow.n != x.n || flow.c != 2 || flow.h != x.h || flow.w != x.w)
    throw ShapeError("flow " + flow.shape_str() + " does not match input " +
                     x.shape_str());
}

}  // namespace

template <class T>
WarpOutT<T> bilinear_warp(const TensorT<T>& x, const FlowFieldT<T>& flow) {
  check_flow(x, flow);
  WarpOutT<T> out;
  TensorT<T> y(x.n, x.c, x.h, x.w);
  parallel_for(std::int64_t(x.n) * x.c, [&](std::int64_t job) {
    const int ic = int(job % x.c);
    const int in = int(job / x.c);
    const T* plane = x.data.data() + x.idx(in, ic, 0, 0);
    const T* fy = flow.data.data() + flow.idx(in, 0, 0, 0);
    const T* fx = flow.data.data() + flow.idx(in, 1, 0, 0);
    T* po = y.data.data() + y.idx(in, ic, 0, 0);
    for (int iy = 0; iy < x.h; ++iy)
      for (int ix = 0; ix < x.w; ++ix) {
        const std::size_t i = std::size_t(iy) * x.w + ix;
        po[i] = bilerp(plane, x.h, x.w, T(iy) + fy[i], T(ix) + fx[i]);
      }
  });
  out.value = std::move(y);
  out.vjp = [x, flow](const TensorT<T>& dy) {
    WarpGradsT<T> g;
    g.x = TensorT<T>(x.n, x.c, x.h, x.w, T(0));
    g.flow = TensorT<T>(flow.n, 2, flow.h, flow.w, T(0));
    // dx is a scatter: give each thread a full (n,c) plane to own.
    parallel_for(std::int64_t(x.n) * x.c, [&](std::int64_t job) {
      const int ic = int(job % x.c);
      const int in = int(job / x.c);
      T* gp = g.x.data.data() + g.x.idx(in, ic, 0, 0);
      const T* fy = flow.data.data() + flow.idx(in, 0, 0, 0);
      const T* fx = flow.data.data() + flow.idx(in, 1, 0, 0);
      const T* gd = dy.data.data() + dy.idx(in, ic, 0, 0);
      for (int iy = 0; iy < x.h; ++iy)
        for (int ix = 0; ix < x.w; ++ix) {
          const std::size_t i = std::size_t(iy) * x.w + ix;
          bilerp_scatter(gp, x.h, x.w, T(iy) + fy[i], T(ix) + fx[i], gd[i]);
        }
    });
    parallel_for(std::int64_t(x.n) * x.h, [&](std::int64_t job) {
      const int iy = int(job % x.h);
      const int in = int(job / x.h);
      const T* fy = flow.data.data() + flow.idx(in, 0, iy, 0);
      const T* fx = flow.data.data() + flow.idx(in, 1, iy, 0);
      T* gfy = g.flow.data.data() + g.flow.idx(in, 0, iy, 0);
      T* gfx = g.flow.data.data() + g.flow.idx(in, 1, iy, 0);
      for (int ix = 0; ix < x.w; ++ix) {
        T ay = T(0), ax = T(0);
        for (int ic = 0; ic < x.c; ++ic) {
          const T* plane = x.data.data() + x.idx(in, ic, 0, 0);
          T gy, gx;
          bilerp_grad_pos(plane, x.h, x.w, T(iy) + fy[ix], T(ix) + fx[ix], gy,
                          gx);
          const T gd = dy.at(in, ic, iy, ix);
          ay += gd * gy;
          ax += gd * gx;
        }
        gfy[ix] = ay;
        gfx[ix] = ax;
      }
    });
    return g;
  };
  return out;
}

namespace {

template <class T>
void check_deform_args(const TensorT<T>& x, const Conv2dParamsT<T>& p,
                       const DeformOffsetsT<T>& off) {
  const int k = p.weight.h;
  if (p.weight.w != k || k % 2 == 0)
    throw ShapeError("deformable_conv kernel must be square and odd");
  if (p.weight.c != x.c)
    throw ShapeError("deformable_conv channel mismatch: input " +
                     x.shape_str() + " vs weight " + p.weight.shape_str());
  if (p.stride != 1 || p.pad != (k - 1) / 2)
    throw ShapeError("deformable_conv requires stride 1, pad (K-1)/2");
  if (off.n != x.n || off.c != 2 * k * k || off.h != x.h || off.w != x.w)
    throw ShapeError("offsets " + off.shape_str() + " must be (N," +
                     std::to_string(2 * k * k) + ",H,W) for input " +
                     x.shape_str());
}

}  // namespace

namespace {

// Sampled-column buffer: columns[(ci*K*K + t) * HW + p] holds the bilinear
// sample of channel ci at tap t's displaced position for output pixel p.
// Sampling once per (ci, tap, pixel) keeps the conv loops pure GEMM-style
// accumulations.
template <class T>
void deform_columns(const TensorT<T>& x, const DeformOffsetsT<T>& off, int in,
                    int k, std::vector<T>& columns) {
  const int pad = (k - 1) / 2;
  const std::size_t hw = std::size_t(x.h) * x.w;
  columns.assign(std::size_t(x.c) * k * k * hw, T(0));
  parallel_for(std::int64_t(x.c) * k * k, [&](std::int64_t job) {
    const int t = int(job % (k * k));
    const int ci = int(job / (k * k));
    const int ky = t / k, kx = t % k;
    const T* plane = x.data.data() + x.idx(in, ci, 0, 0);
    const T* oy_row = off.data.data() + off.idx(in, 2 * t, 0, 0);
    const T* ox_row = off.data.data() + off.idx(in, 2 * t + 1, 0, 0);
    T* col = columns.data() + job * hw;
    for (int y = 0; y < x.h; ++y)
      for (int xx = 0; xx < x.w; ++xx) {
        const std::size_t p = std::size_t(y) * x.w + xx;
        col[p] = bilerp(plane, x.h, x.w, T(y - pad + ky) + oy_row[p],
                        T(xx - pad + kx) + ox_row[p]);
      }
  });
}

}  // namespace

template <class T>
TensorT<T> deformable_conv_forward(const TensorT<T>& x,
                                   const Conv2dParamsT<T>& p,
                                   const DeformOffsetsT<T>& off) {
  check_deform_args(x, p, off);
  const int k = p.weight.h;
  const int co_n = p.weight.n, ci_n = x.c;
  const std::size_t hw = std::size_t(x.h) * x.w;
  TensorT<T> out(x.n, co_n, x.h, x.w);
  std::vector<T> columns;
  for (int in = 0; in < x.n; ++in) {
    deform_columns(x, off, in, k, columns);
    parallel_for(co_n, [&](std::int64_t co) {
      T* orow = out.data.data() + out.idx(in, int(co), 0, 0);
      const T bias = p.bias.data[co];
      for (std::size_t i = 0; i < hw; ++i) orow[i] = bias;
      const T* wrow = p.weight.data.data() + std::size_t(co) * ci_n * k * k;
      for (int j = 0; j < ci_n * k * k; ++j) {
        const T wv = wrow[j];
        const T* col = columns.data() + std::size_t(j) * hw;
        for (std::size_t i = 0; i < hw; ++i) orow[i] += wv * col[i];
      }
    });
  }
  return out;
}

namespace {

// Columns of position derivatives alongside the samples, for the backward
// pass: gy/gx hold d(sample)/d(offset_y), d(sample)/d(offset_x).
template <class T>
void deform_columns_with_grads(const TensorT<T>& x,
                               const DeformOffsetsT<T>& off, int in, int k,
                               std::vector<T>& cols, std::vector<T>& gy_cols,
                               std::vector<T>& gx_cols) {
  const int pad = (k - 1) / 2;
  const std::size_t hw = std::size_t(x.h) * x.w;
  cols.assign(std::size_t(x.c) * k * k * hw, T(0));
  gy_cols.assign(cols.size(), T(0));
  gx_cols.assign(cols.size(), T(0));
  parallel_for(std::int64_t(x.c) * k * k, [&](std::int64_t job) {
    const int t = int(job % (k * k));
    const int ci = int(job / (k * k));
    const int ky = t / k, kx = t % k;
    const T* plane = x.data.data() + x.idx(in, ci, 0, 0);
    const T* oy_row = off.data.data() + off.idx(in, 2 * t, 0, 0);
    const T* ox_row = off.data.data() + off.idx(in, 2 * t + 1, 0, 0);
    T* col = cols.data() + job * hw;
    T* gyc = gy_cols.data() + job * hw;
    T* gxc = gx_cols.data() + job * hw;
    for (int y = 0; y < x.h; ++y)
      for (int xx = 0; xx < x.w; ++xx) {
        const std::size_t p = std::size_t(y) * x.w + xx;
        const T py = T(y - pad + ky) + oy_row[p];
        const T px = T(xx - pad + kx) + ox_row[p];
        col[p] = bilerp(plane, x.h, x.w, py, px);
        bilerp_grad_pos(plane, x.h, x.w, py, px, gyc[p], gxc[p]);
      }
  });
}

}  // namespace

template <class T>
DeformOutT<T> deformable_conv(const TensorT<T>& x, const Conv2dParamsT<T>& p,
                              const DeformOffsetsT<T>& off) {
  DeformOutT<T> out;
  out.value = deformable_conv_forward(x, p, off);
  out.vjp = [x, p, off](const TensorT<T>& dy) {
    const int k = p.weight.h, pad = (k - 1) / 2;
    const int co_n = p.weight.n, ci_n = x.c;
    const int jn = ci_n * k * k;
    const std::size_t hw = std::size_t(x.h) * x.w;
    DeformGradsT<T> g;
    g.weight = TensorT<T>(co_n, ci_n, k, k, T(0));
    g.bias = TensorT<T>(1, co_n, 1, 1, T(0));
    g.offsets = TensorT<T>(off.n, off.c, off.h, off.w, T(0));
    g.x = TensorT<T>(x.n, x.c, x.h, x.w, T(0));

    std::vector<T> cols, gy_cols, gx_cols, gcol;
    for (int in = 0; in < x.n; ++in) {
      deform_columns_with_grads(x, off, in, k, cols, gy_cols, gx_cols);

      // cotangent routed through the weights: G[j][p] = sum_co w[co][j] dy
      gcol.assign(std::size_t(jn) * hw, T(0));
      parallel_for(jn, [&](std::int64_t j) {
        T* grow = gcol.data() + j * hw;
        for (int co = 0; co < co_n; ++co) {
          const T wv = p.weight.data[std::size_t(co) * jn + j];
          const T* dyrow = dy.data.data() + dy.idx(in, co, 0, 0);
          for (std::size_t i = 0; i < hw; ++i) grow[i] += wv * dyrow[i];
        }
      });

      parallel_for(co_n, [&](std::int64_t co) {
        const T* dyrow = dy.data.data() + dy.idx(in, int(co), 0, 0);
        T* dwrow = g.weight.data.data() + std::size_t(co) * jn;
        for (int j = 0; j < jn; ++j) {
          const T* col = cols.data() + std::size_t(j) * hw;
          T acc = T(0);
          for (std::size_t i = 0; i < hw; ++i) acc += dyrow[i] * col[i];
          dwrow[j] += acc;
        }
        T bacc = T(0);
        for (std::size_t i = 0; i < hw; ++i) bacc += dyrow[i];
        g.bias.data[co] += bacc;
      });

      parallel_for(k * k, [&](std::int64_t t) {
        T* oy_out = g.offsets.data.data() + g.offsets.idx(in, int(2 * t), 0, 0);
        T* ox_out =
            g.offsets.data.data() + g.offsets.idx(in, int(2 * t + 1), 0, 0);
        for (int ci = 0; ci < ci_n; ++ci) {
          const std::size_t j = std::size_t(ci) * k * k + t;
          const T* grow = gcol.data() + j * hw;
          const T* gyc = gy_cols.data() + j * hw;
          const T* gxc = gx_cols.data() + j * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            oy_out[i] += grow[i] * gyc[i];
            ox_out[i] += grow[i] * gxc[i];
          }
        }
      });

      // dx scatter: channel planes are disjoint, one thread per channel
      parallel_for(ci_n, [&](std::int64_t ci) {
        T* gp = g.x.data.data() + g.x.idx(in, int(ci), 0, 0);
        for (int t = 0; t < k * k; ++t) {
          const int ky = t / k, kx = t % k;
          const std::size_t j = std::size_t(ci) * k * k + t;
          const T* grow = gcol.data() + j * hw;
          const T* oy_row = off.data.data() + off.idx(in, 2 * t, 0, 0);
          const T* ox_row = off.data.data() + off.idx(in, 2 * t + 1, 0, 0);
          for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx) {
              const std::size_t i = std::size_t(y) * x.w + xx;
              bilerp_scatter(gp, x.h, x.w, T(y - pad + ky) + oy_row[i],
                             T(xx - pad + kx) + ox_row[i], grow[i]);
            }
        }
      });
    }
    return g;
  };
  return out;
}

#define EXSR_INSTANTIATE(T)                                                    \
  template WarpOutT<T> bilinear_warp<T>(const TensorT<T>&,                     \
                                        const FlowFieldT<T>&);                 \
  template TensorT<T> deformable_conv_forward<T>(                              \
      const TensorT<T>&, const Conv2dParamsT<T>&, const DeformOffsetsT<T>&);   \
  template DeformOutT<T> deformable_conv<T>(                                   \
      const TensorT<T>&, const Conv2dParamsT<T>&, const DeformOffsetsT<T>&);

EXSR_INSTANTIATE(float)
EXSR_INSTANTIATE(double)
#undef EXSR_INSTANTIATE

}  // namespace exsr
