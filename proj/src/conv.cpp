#include "exsr/conv.hpp"

#include <algorithm>

#include "exsr/parallel.hpp"

namespace exsr {

namespace {

template <class T>
void check_conv_args(const TensorT<T>& x, const Conv2dParamsT<T>& p) {
  const int k = p.weight.h;
  if (p.weight.w != k || k % 2 == 0)
    throw ShapeError("conv2d kernel must be square with odd size, got " +
                     p.weight.shape_str());
  if (p.weight.c != x.c)
    throw ShapeError("conv2d channel mismatch: input " + x.shape_str() +
                     " vs weight " + p.weight.shape_str());
  if (p.bias.n != 1 || p.bias.c != p.weight.n || p.bias.h != 1 || p.bias.w != 1)
    throw ShapeError("conv2d bias must be (1,C_out,1,1), got " +
                     p.bias.shape_str());
  if (p.stride < 1) throw ShapeError("conv2d stride must be positive");
  if (p.pad < 0) throw ShapeError("conv2d padding must be non-negative");
  if (x.h + 2 * p.pad < k || x.w + 2 * p.pad < k)
    throw ShapeError("conv2d input " + x.shape_str() + " smaller than kernel");
}

}  // namespace

template <class T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const Conv2dParamsT<T>& p) {
  check_conv_args(x, p);
  const int k = p.weight.h, s = p.stride, pad = p.pad;
  const int co_n = p.weight.n, ci_n = x.c;
  const int oh = (x.h + 2 * pad - k) / s + 1;
  const int ow = (x.w + 2 * pad - k) / s + 1;
  TensorT<T> out(x.n, co_n, oh, ow);

  parallel_for(std::int64_t(x.n) * co_n * oh, [&](std::int64_t job) {
    const int oy = int(job % oh);
    const int co = int((job / oh) % co_n);
    const int in = int(job / (std::int64_t(oh) * co_n));
    T* orow = out.data.data() + out.idx(in, co, oy, 0);
    const T bias = p.bias.data[co];
    for (int ox = 0; ox < ow; ++ox) orow[ox] = bias;
    for (int ci = 0; ci < ci_n; ++ci) {
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * s - pad + ky;
        if (iy < 0 || iy >= x.h) continue;
        const T* xrow = x.data.data() + x.idx(in, ci, iy, 0);
        const T* wrow = p.weight.data.data() + p.weight.idx(co, ci, ky, 0);
        if (s == 1) {
          for (int kx = 0; kx < k; ++kx) {
            const T wv = wrow[kx];
            const int lo = std::max(0, pad - kx);
            const int hi = std::min(ow, x.w + pad - kx);
            const T* xr = xrow + lo - pad + kx;
            for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * xr[ox - lo];
          }
        } else {
          for (int ox = 0; ox < ow; ++ox) {
            T acc = T(0);
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s - pad + kx;
              if (ix >= 0 && ix < x.w) acc += wrow[kx] * xrow[ix];
            }
            orow[ox] += acc;
          }
        }
      }
    }
  });
  return out;
}

namespace {

// All three gradients are written as gathers so each output cell is a
// fixed-order serial sum, independent of the thread partition.
template <class T>
TensorT<T> conv2d_grad_x(const TensorT<T>& dy, const Conv2dParamsT<T>& p,
                         int xn, int xc, int xh, int xw) {
  const int k = p.weight.h, s = p.stride, pad = p.pad;
  const int co_n = p.weight.n;
  TensorT<T> dx(xn, xc, xh, xw, T(0));
  parallel_for(std::int64_t(xn) * xc * xh, [&](std::int64_t job) {
    const int iy = int(job % xh);
    const int ci = int((job / xh) % xc);
    const int in = int(job / (std::int64_t(xh) * xc));
    T* drow = dx.data.data() + dx.idx(in, ci, iy, 0);
    if (s == 1) {
      for (int co = 0; co < co_n; ++co)
        for (int ky = 0; ky < k; ++ky) {
          const int oy = iy + pad - ky;
          if (oy < 0 || oy >= dy.h) continue;
          const T* dyrow = dy.data.data() + dy.idx(in, co, oy, 0);
          const T* wrow = p.weight.data.data() + p.weight.idx(co, ci, ky, 0);
          for (int kx = 0; kx < k; ++kx) {
            const T wv = wrow[kx];
            const int lo = std::max(0, kx - pad);
            const int hi = std::min(xw, dy.w + kx - pad);
            const T* dr = dyrow + lo + pad - kx;
            for (int ix = lo; ix < hi; ++ix) drow[ix] += wv * dr[ix - lo];
          }
        }
    } else {
      for (int ix = 0; ix < xw; ++ix) {
        T acc = T(0);
        for (int co = 0; co < co_n; ++co)
          for (int ky = 0; ky < k; ++ky) {
            const int t = iy + pad - ky;
            if (t < 0 || t % s != 0) continue;
            const int oy = t / s;
            if (oy >= dy.h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int u = ix + pad - kx;
              if (u < 0 || u % s != 0) continue;
              const int ox = u / s;
              if (ox >= dy.w) continue;
              acc += p.weight.at(co, ci, ky, kx) * dy.at(in, co, oy, ox);
            }
          }
        drow[ix] = acc;
      }
    }
  });
  return dx;
}

template <class T>
TensorT<T> conv2d_grad_w(const TensorT<T>& x, const TensorT<T>& dy,
                         const Conv2dParamsT<T>& p) {
  const int k = p.weight.h, s = p.stride, pad = p.pad;
  const int co_n = p.weight.n, ci_n = x.c;
  TensorT<T> dw(co_n, ci_n, k, k);
  parallel_for(std::int64_t(co_n) * ci_n, [&](std::int64_t job) {
    const int ci = int(job % ci_n);
    const int co = int(job / ci_n);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T acc = T(0);
        for (int in = 0; in < x.n; ++in)
          for (int oy = 0; oy < dy.h; ++oy) {
            const int iy = oy * s - pad + ky;
            if (iy < 0 || iy >= x.h) continue;
            const T* xrow = x.data.data() + x.idx(in, ci, iy, 0);
            const T* gr = dy.data.data() + dy.idx(in, co, oy, 0);
            if (s == 1) {
              const int lo = std::max(0, pad - kx);
              const int hi = std::min(dy.w, x.w + pad - kx);
              const T* xr = xrow + lo - pad + kx;
              for (int ox = lo; ox < hi; ++ox) acc += xr[ox - lo] * gr[ox];
            } else {
              for (int ox = 0; ox < dy.w; ++ox) {
                const int ix = ox * s - pad + kx;
                if (ix >= 0 && ix < x.w) acc += xrow[ix] * gr[ox];
              }
            }
          }
        dw.at(co, ci, ky, kx) = acc;
      }
  });
  return dw;
}

template <class T>
TensorT<T> conv2d_grad_b(const TensorT<T>& dy) {
  TensorT<T> db(1, dy.c, 1, 1);
  parallel_for(dy.c, [&](std::int64_t co) {
    T acc = T(0);
    for (int in = 0; in < dy.n; ++in) {
      const T* g = dy.data.data() + dy.idx(in, int(co), 0, 0);
      const std::size_t hw = std::size_t(dy.h) * dy.w;
      for (std::size_t i = 0; i < hw; ++i) acc += g[i];
    }
    db.data[co] = acc;
  });
  return db;
}

}  // namespace

template <class T>
ConvOutT<T> conv2d(const TensorT<T>& x, const Conv2dParamsT<T>& p) {
  ConvOutT<T> out;
  out.value = conv2d_forward(x, p);
  const int xn = x.n, xc = x.c, xh = x.h, xw = x.w;
  out.vjp = [x, p, xn, xc, xh, xw](const TensorT<T>& dy) {
    ConvGradsT<T> g;
    g.x = conv2d_grad_x(dy, p, xn, xc, xh, xw);
    g.weight = conv2d_grad_w(x, dy, p);
    g.bias = conv2d_grad_b(dy);
    return g;
  };
  return out;
}

template <class T>
ResidualOutT<T> residual_block(const TensorT<T>& x, const Conv2dParamsT<T>& p1,
                               const Conv2dParamsT<T>& p2) {
  auto c1 = conv2d(x, p1);
  auto act = activation(c1.value, ActKind::relu);
  auto c2 = conv2d(act.value, p2);
  if (!x.same_shape(c2.value))
    throw ShapeError("residual branch " + c2.value.shape_str() +
                     " does not match skip " + x.shape_str());
  ResidualOutT<T> out;
  out.value = ew(x, c2.value, EwOp::add);
  out.vjp = [v1 = c1.vjp, va = act.vjp, v2 = c2.vjp](const TensorT<T>& dy) {
    ResidualGradsT<T> g;
    auto g2 = v2(dy);
    g.w2 = std::move(g2.weight);
    g.b2 = std::move(g2.bias);
    auto da = va(g2.x);
    auto g1 = v1(da[0]);
    g.w1 = std::move(g1.weight);
    g.b1 = std::move(g1.bias);
    g.x = g1.x;
    add_inplace(g.x, dy);  // skip path
    return g;
  };
  return out;
}

#define EXSR_INSTANTIATE(T)                                                  \
  template TensorT<T> conv2d_forward<T>(const TensorT<T>&,                  \
                                        const Conv2dParamsT<T>&);           \
  template ConvOutT<T> conv2d<T>(const TensorT<T>&, const Conv2dParamsT<T>&); \
  template ResidualOutT<T> residual_block<T>(                               \
      const TensorT<T>&, const Conv2dParamsT<T>&, const Conv2dParamsT<T>&);

EXSR_INSTANTIATE(float)
EXSR_INSTANTIATE(double)
#undef EXSR_INSTANTIATE

}  // namespace exsr
