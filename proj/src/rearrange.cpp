#include "exsr/rearrange.hpp"

#include <cmath>

#include "exsr/parallel.hpp"

namespace exsr {

namespace {

template <class T>
TensorT<T> s2d_kernel(const TensorT<T>& x, int r) {
  const int oh = x.h / r, ow = x.w / r;
  TensorT<T> out(x.n, x.c * r * r, oh, ow);
  parallel_for(std::int64_t(x.n) * x.c, [&](std::int64_t job) {
    const int ic = int(job % x.c);
    const int in = int(job / x.c);
    for (int dy = 0; dy < r; ++dy)
      for (int dx = 0; dx < r; ++dx) {
        const int oc = ic * r * r + dy * r + dx;
        for (int y = 0; y < oh; ++y)
          for (int xx = 0; xx < ow; ++xx)
            out.at(in, oc, y, xx) = x.at(in, ic, y * r + dy, xx * r + dx);
      }
  });
  return out;
}

template <class T>
TensorT<T> ps_kernel(const TensorT<T>& x, int r) {
  const int oc_n = x.c / (r * r);
  TensorT<T> out(x.n, oc_n, x.h * r, x.w * r);
  parallel_for(std::int64_t(x.n) * oc_n, [&](std::int64_t job) {
    const int oc = int(job % oc_n);
    const int in = int(job / oc_n);
    for (int dy = 0; dy < r; ++dy)
      for (int dx = 0; dx < r; ++dx) {
        const int ic = oc * r * r + dy * r + dx;
        for (int y = 0; y < x.h; ++y)
          for (int xx = 0; xx < x.w; ++xx)
            out.at(in, oc, y * r + dy, xx * r + dx) = x.at(in, ic, y, xx);
      }
  });
  return out;
}

}  // namespace

template <class T>
DiffOutT<T> space_to_depth(const TensorT<T>& x, int r) {
  if (r < 1) throw ParamError("space_to_depth factor must be positive");
  if (x.h % r != 0 || x.w % r != 0)
    throw ShapeError("space_to_depth: " + x.shape_str() +
                     " not divisible by r=" + std::to_string(r));
  DiffOutT<T> out;
  out.value = s2d_kernel(x, r);
  out.vjp = [r](const TensorT<T>& dy) {
    return std::vector<TensorT<T>>{ps_kernel(dy, r)};
  };
  return out;
}

template <class T>
DiffOutT<T> pixel_shuffle(const TensorT<T>& x, int r) {
  if (r < 1) throw ParamError("pixel_shuffle factor must be positive");
  if (x.c % (r * r) != 0)
    throw ShapeError("pixel_shuffle: channels of " + x.shape_str() +
                     " not divisible by r^2=" + std::to_string(r * r));
  DiffOutT<T> out;
  out.value = ps_kernel(x, r);
  out.vjp = [r](const TensorT<T>& dy) {
    return std::vector<TensorT<T>>{s2d_kernel(dy, r)};
  };
  return out;
}

template <class T>
TensorT<T> nearest_up(const TensorT<T>& x, int r) {
  TensorT<T> out(x.n, x.c, x.h * r, x.w * r);
  for (int in = 0; in < x.n; ++in)
    for (int ic = 0; ic < x.c; ++ic)
      for (int y = 0; y < out.h; ++y)
        for (int xx = 0; xx < out.w; ++xx)
          out.at(in, ic, y, xx) = x.at(in, ic, y / r, xx / r);
  return out;
}

template <class T>
TensorT<T> fanin_uniform(int c_out, int c_in, int k, Rng& rng) {
  TensorT<T> w(c_out, c_in, k, k);
  const double bound = std::sqrt(1.0 / (double(c_in) * k * k));
  for (auto& v : w.data) v = T(rng.uniform(-bound, bound));
  return w;
}

template <class T>
TensorT<T> icnr_init(int c_out, int c_in, int k, int r, Rng& rng) {
  if (r < 1) throw ParamError("icnr_init factor must be positive");
  if (c_out % (r * r) != 0)
    throw ShapeError("icnr_init: C_out=" + std::to_string(c_out) +
                     " not divisible by r^2=" + std::to_string(r * r));
  TensorT<T> sub = fanin_uniform<T>(c_out / (r * r), c_in, k, rng);
  TensorT<T> w(c_out, c_in, k, k);
  for (int c = 0; c < sub.n; ++c)
    for (int o = 0; o < r * r; ++o)
      for (int ci = 0; ci < c_in; ++ci)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx)
            w.at(c * r * r + o, ci, ky, kx) = sub.at(c, ci, ky, kx);
  return w;
}

#define EXSR_INSTANTIATE(T)                                        \
  template DiffOutT<T> space_to_depth<T>(const TensorT<T>&, int);  \
  template DiffOutT<T> pixel_shuffle<T>(const TensorT<T>&, int);   \
  template TensorT<T> nearest_up<T>(const TensorT<T>&, int);       \
  template TensorT<T> fanin_uniform<T>(int, int, int, Rng&);       \
  template TensorT<T> icnr_init<T>(int, int, int, int, Rng&);

EXSR_INSTANTIATE(float)
EXSR_INSTANTIATE(double)
#undef EXSR_INSTANTIATE

}  // namespace exsr
