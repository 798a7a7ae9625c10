#include "exsr/ref_kernels.hpp"

#include <cmath>

#include "exsr/resize.hpp"

namespace exsr::ref {

namespace {

template <class T>
T sample_zero_pad(const TensorT<T>& x, int in, int ic, double y, double xx) {
  if (y <= -1.0 || y >= double(x.h) || xx <= -1.0 || xx >= double(x.w))
    return T(0);
  const int y0 = int(std::floor(y)), x0 = int(std::floor(xx));
  const double ly = y - y0, lx = xx - x0;
  auto pick = [&](int yy, int xc) -> double {
    if (yy < 0 || yy >= x.h || xc < 0 || xc >= x.w) return 0.0;
    return double(x.at(in, ic, yy, xc));
  };
  const double top = (1.0 - lx) * pick(y0, x0) + lx * pick(y0, x0 + 1);
  const double bot = (1.0 - lx) * pick(y0 + 1, x0) + lx * pick(y0 + 1, x0 + 1);
  return T((1.0 - ly) * top + ly * bot);
}

}  // namespace

template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const Conv2dParamsT<T>& p) {
  const int k = p.weight.h, s = p.stride, pad = p.pad;
  const int oh = (x.h + 2 * pad - k) / s + 1;
  const int ow = (x.w + 2 * pad - k) / s + 1;
  TensorT<T> out(x.n, p.weight.n, oh, ow);
  for (int in = 0; in < x.n; ++in)
    for (int co = 0; co < p.weight.n; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = p.bias.data[co];
          for (int ci = 0; ci < x.c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * s - pad + ky;
                const int ix = ox * s - pad + kx;
                if (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w)
                  acc += p.weight.at(co, ci, ky, kx) * x.at(in, ci, iy, ix);
              }
          out.at(in, co, oy, ox) = acc;
        }
  return out;
}

template <class T>
ConvGradsT<T> conv2d_backward(const TensorT<T>& x, const Conv2dParamsT<T>& p,
                              const TensorT<T>& dy) {
  const int k = p.weight.h, s = p.stride, pad = p.pad;
  ConvGradsT<T> g;
  g.x = TensorT<T>(x.n, x.c, x.h, x.w, T(0));
  g.weight = TensorT<T>(p.weight.n, p.weight.c, k, k, T(0));
  g.bias = TensorT<T>(1, p.weight.n, 1, 1, T(0));
  for (int in = 0; in < x.n; ++in)
    for (int co = 0; co < p.weight.n; ++co)
      for (int oy = 0; oy < dy.h; ++oy)
        for (int ox = 0; ox < dy.w; ++ox) {
          const T gd = dy.at(in, co, oy, ox);
          g.bias.data[co] += gd;
          for (int ci = 0; ci < x.c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * s - pad + ky;
                const int ix = ox * s - pad + kx;
                if (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w) {
                  g.weight.at(co, ci, ky, kx) += gd * x.at(in, ci, iy, ix);
                  g.x.at(in, ci, iy, ix) += gd * p.weight.at(co, ci, ky, kx);
                }
              }
        }
  return g;
}

template <class T>
TensorT<T> deformable_conv(const TensorT<T>& x, const Conv2dParamsT<T>& p,
                           const DeformOffsetsT<T>& off) {
  const int k = p.weight.h, pad = (k - 1) / 2;
  TensorT<T> out(x.n, p.weight.n, x.h, x.w);
  for (int in = 0; in < x.n; ++in)
    for (int co = 0; co < p.weight.n; ++co)
      for (int oy = 0; oy < x.h; ++oy)
        for (int ox = 0; ox < x.w; ++ox) {
          T acc = p.bias.data[co];
          for (int ci = 0; ci < x.c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int t = ky * k + kx;
                const double py =
                    oy - pad + ky + double(off.at(in, 2 * t, oy, ox));
                const double px =
                    ox - pad + kx + double(off.at(in, 2 * t + 1, oy, ox));
                acc += p.weight.at(co, ci, ky, kx) *
                       sample_zero_pad(x, in, ci, py, px);
              }
          out.at(in, co, oy, ox) = acc;
        }
  return out;
}

template <class T>
TensorT<T> bilinear_warp(const TensorT<T>& x, const FlowFieldT<T>& flow) {
  TensorT<T> out(x.n, x.c, x.h, x.w);
  for (int in = 0; in < x.n; ++in)
    for (int ic = 0; ic < x.c; ++ic)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx)
          out.at(in, ic, y, xx) =
              sample_zero_pad(x, in, ic, y + double(flow.at(in, 0, y, xx)),
                              xx + double(flow.at(in, 1, y, xx)));
  return out;
}

template <class T>
TensorT<T> correlation_map(const TensorT<T>& img, int k, int d) {
  const int r = (k - 1) / 2;
  TensorT<T> mean = exsr::channel_mean(img);
  TensorT<T> centered = img;
  for (int in = 0; in < img.n; ++in)
    for (int ic = 0; ic < img.c; ++ic)
      for (int y = 0; y < img.h; ++y)
        for (int xx = 0; xx < img.w; ++xx)
          centered.at(in, ic, y, xx) -= mean.at(in, ic, 0, 0);
  TensorT<T> out(img.n, k * k, img.h, img.w, T(0));
  for (int in = 0; in < img.n; ++in)
    for (int i = -r; i <= r; ++i)
      for (int j = -r; j <= r; ++j) {
        const int t = (i + r) * k + (j + r);
        for (int y = 0; y < img.h; ++y)
          for (int xx = 0; xx < img.w; ++xx) {
            const int ny = y - j * d;  // j displaces rows, i displaces columns
            const int nx = xx - i * d;
            if (ny < 0 || ny >= img.h || nx < 0 || nx >= img.w) continue;
            T acc = T(0);
            for (int ic = 0; ic < img.c; ++ic)
              acc += centered.at(in, ic, y, xx) * centered.at(in, ic, ny, nx);
            out.at(in, t, y, xx) = acc / T(k * k);
          }
      }
  return out;
}

template <class T>
TensorT<T> bicubic_resize(const TensorT<T>& x, double scale) {
  const int oh = int(std::floor(scale * x.h + 1e-9));
  const int ow = int(std::floor(scale * x.w + 1e-9));
  TensorT<T> out(x.n, x.c, oh, ow);
  auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  for (int in = 0; in < x.n; ++in)
    for (int ic = 0; ic < x.c; ++ic)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const double sy = (oy + 0.5) / scale - 0.5;
          const double sx = (ox + 0.5) / scale - 0.5;
          const int by = int(std::floor(sy)), bx = int(std::floor(sx));
          double acc = 0.0;
          for (int jy = -1; jy <= 2; ++jy)
            for (int jx = -1; jx <= 2; ++jx) {
              const double wv =
                  cubic_weight(sy - (by + jy)) * cubic_weight(sx - (bx + jx));
              acc += wv * double(x.at(in, ic, clampi(by + jy, x.h - 1),
                                      clampi(bx + jx, x.w - 1)));
            }
          out.at(in, ic, oy, ox) = T(acc);
        }
  return out;
}

#define EXSR_INSTANTIATE(T)                                                  \
  template TensorT<T> conv2d<T>(const TensorT<T>&, const Conv2dParamsT<T>&); \
  template ConvGradsT<T> conv2d_backward<T>(                                 \
      const TensorT<T>&, const Conv2dParamsT<T>&, const TensorT<T>&);        \
  template TensorT<T> deformable_conv<T>(                                    \
      const TensorT<T>&, const Conv2dParamsT<T>&, const DeformOffsetsT<T>&); \
  template TensorT<T> bilinear_warp<T>(const TensorT<T>&,                    \
                                       const FlowFieldT<T>&);                \
  template TensorT<T> correlation_map<T>(const TensorT<T>&, int, int);       \
  template TensorT<T> bicubic_resize<T>(const TensorT<T>&, double);

EXSR_INSTANTIATE(float)
EXSR_INSTANTIATE(double)
#undef EXSR_INSTANTIATE

}  // namespace exsr::ref
