#include "exsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "exsr/parallel.hpp"

namespace exsr {

template <class T>
TensorT<T>::TensorT(int n_, int c_, int h_, int w_, T fill)
    : n(n_), c(c_), h(h_), w(w_) {
  if (n < 0 || c < 0 || h < 0 || w < 0)
    throw ShapeError("negative tensor dimension");
  data.assign(std::size_t(n) * c * h * w, fill);
}

template <class T>
TensorT<T>::TensorT(int n_, int c_, int h_, int w_, std::vector<T> values)
    : n(n_), c(c_), h(h_), w(w_), data(std::move(values)) {
  if (n < 0 || c < 0 || h < 0 || w < 0)
    throw ShapeError("negative tensor dimension");
  if (data.size() != std::size_t(n) * c * h * w)
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str());
}

template <class T>
std::string TensorT<T>::shape_str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + ")";
}

namespace {

enum class Bcast { same, per_channel, per_pixel };

template <class T>
Bcast bcast_kind(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.same_shape(b)) return Bcast::same;
  if (b.n == 1 && b.c == a.c && b.h == 1 && b.w == 1) return Bcast::per_channel;
  if (b.n == 1 && b.c == 1 && b.h == a.h && b.w == a.w) return Bcast::per_pixel;
  throw ShapeError("incompatible elementwise shapes " + a.shape_str() + " vs " +
                   b.shape_str());
}

template <class T>
T apply_ew(T x, T y, EwOp op) {
  switch (op) {
    case EwOp::add: return x + y;
    case EwOp::sub: return x - y;
    default: return x * y;
  }
}

}  // namespace

template <class T>
TensorT<T> ew(const TensorT<T>& a, const TensorT<T>& b, EwOp op) {
  Bcast k = bcast_kind(a, b);
  TensorT<T> out(a.n, a.c, a.h, a.w);
  const std::size_t hw = std::size_t(a.h) * a.w;
  parallel_for(std::int64_t(a.n) * a.c, [&](std::int64_t nc) {
    const int in = int(nc / a.c), ic = int(nc % a.c);
    const T* pa = a.data.data() + nc * hw;
    T* po = out.data.data() + nc * hw;
    if (k == Bcast::same) {
      const T* pb = b.data.data() + nc * hw;
      for (std::size_t i = 0; i < hw; ++i) po[i] = apply_ew(pa[i], pb[i], op);
    } else if (k == Bcast::per_channel) {
      const T bv = b.data[ic];
      for (std::size_t i = 0; i < hw; ++i) po[i] = apply_ew(pa[i], bv, op);
    } else {
      const T* pb = b.data.data();
      for (std::size_t i = 0; i < hw; ++i) po[i] = apply_ew(pa[i], pb[i], op);
    }
    (void)in;
  });
  return out;
}

template <class T>
TensorT<T> scaled(const TensorT<T>& a, T s) {
  TensorT<T> out = a;
  for (auto& v : out.data) v *= s;
  return out;
}

template <class T>
void add_inplace(TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b))
    throw ShapeError("add_inplace shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

template <class T>
TensorT<T> channel_mean(const TensorT<T>& a) {
  if (a.h * a.w <= 0) throw ShapeError("channel_mean on empty spatial extent");
  TensorT<T> out(a.n, a.c, 1, 1);
  const std::size_t hw = std::size_t(a.h) * a.w;
  // wider accumulator so a constant channel yields its value exactly
  using Acc = std::conditional_t<std::is_same_v<T, float>, double, long double>;
  parallel_for(std::int64_t(a.n) * a.c, [&](std::int64_t nc) {
    const T* pa = a.data.data() + nc * hw;
    Acc acc = Acc(0);
    for (std::size_t i = 0; i < hw; ++i) acc += Acc(pa[i]);
    out.data[nc] = T(acc / Acc(hw));
  });
  return out;
}

template <class T>
TensorT<T> apply_activation(const TensorT<T>& a, ActKind kind) {
  TensorT<T> out(a.n, a.c, a.h, a.w);
  if (kind == ActKind::relu) {
    for (std::size_t i = 0; i < a.data.size(); ++i)
      out.data[i] = a.data[i] > T(0) ? a.data[i] : T(0);
  } else {
    for (std::size_t i = 0; i < a.data.size(); ++i)
      out.data[i] = T(1) / (T(1) + std::exp(-a.data[i]));
  }
  return out;
}

template <class T>
T sum_all(const TensorT<T>& a) {
  T acc = T(0);
  for (T v : a.data) acc += v;
  return acc;
}

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw ShapeError("concat_channels mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  TensorT<T> out(a.n, a.c + b.c, a.h, a.w);
  const std::size_t hw = std::size_t(a.h) * a.w;
  for (int in = 0; in < a.n; ++in) {
    std::copy(a.data.begin() + in * a.c * hw, a.data.begin() + (in + 1) * a.c * hw,
              out.data.begin() + std::size_t(in) * out.c * hw);
    std::copy(b.data.begin() + in * b.c * hw, b.data.begin() + (in + 1) * b.c * hw,
              out.data.begin() + std::size_t(in) * out.c * hw + a.c * hw);
  }
  return out;
}

template <class T>
TensorT<T> slice_channels(const TensorT<T>& a, int c0, int len) {
  if (c0 < 0 || len < 0 || c0 + len > a.c)
    throw ShapeError("slice_channels [" + std::to_string(c0) + "," +
                     std::to_string(c0 + len) + ") out of " + a.shape_str());
  TensorT<T> out(a.n, len, a.h, a.w);
  const std::size_t hw = std::size_t(a.h) * a.w;
  for (int in = 0; in < a.n; ++in)
    std::copy(a.data.begin() + (std::size_t(in) * a.c + c0) * hw,
              a.data.begin() + (std::size_t(in) * a.c + c0 + len) * hw,
              out.data.begin() + std::size_t(in) * len * hw);
  return out;
}

// Reduce a full-shape cotangent onto a broadcast operand's shape.
template <class T>
static TensorT<T> reduce_to(const TensorT<T>& cot, int bn, int bc, int bh,
                            int bw) {
  if (cot.n == bn && cot.c == bc && cot.h == bh && cot.w == bw) return cot;
  TensorT<T> out(bn, bc, bh, bw, T(0));
  if (bh == 1 && bw == 1) {  // (1,C,1,1)
    for (int in = 0; in < cot.n; ++in)
      for (int ic = 0; ic < cot.c; ++ic) {
        T acc = T(0);
        for (int y = 0; y < cot.h; ++y)
          for (int x = 0; x < cot.w; ++x) acc += cot.at(in, ic, y, x);
        out.data[ic] += acc;
      }
  } else {  // (1,1,H,W)
    for (int in = 0; in < cot.n; ++in)
      for (int ic = 0; ic < cot.c; ++ic)
        for (int y = 0; y < cot.h; ++y)
          for (int x = 0; x < cot.w; ++x)
            out.at(0, 0, y, x) += cot.at(in, ic, y, x);
  }
  return out;
}

template <class T>
DiffOutT<T> ew_binary(const TensorT<T>& a, const TensorT<T>& b, EwOp op) {
  bcast_kind(a, b);  // validate before capturing
  DiffOutT<T> out;
  out.value = ew(a, b, op);
  if (op == EwOp::mul) {
    out.vjp = [a, b](const TensorT<T>& dy) {
      TensorT<T> da = ew(dy, b, EwOp::mul);
      TensorT<T> db_full = ew(dy, a, EwOp::mul);
      return std::vector<TensorT<T>>{da, reduce_to(db_full, b.n, b.c, b.h, b.w)};
    };
  } else {
    const T sign = op == EwOp::add ? T(1) : T(-1);
    const int bn = b.n, bc = b.c, bh = b.h, bw = b.w;
    out.vjp = [sign, bn, bc, bh, bw](const TensorT<T>& dy) {
      TensorT<T> db = reduce_to(dy, bn, bc, bh, bw);
      if (sign < T(0))
        for (auto& v : db.data) v = -v;
      return std::vector<TensorT<T>>{dy, db};
    };
  }
  return out;
}

template <class T>
DiffOutT<T> channel_mean_op(const TensorT<T>& a) {
  DiffOutT<T> out;
  out.value = channel_mean(a);
  const int n = a.n, c = a.c, h = a.h, w = a.w;
  out.vjp = [n, c, h, w](const TensorT<T>& dy) {
    TensorT<T> da(n, c, h, w);
    const T inv = T(1) / T(std::size_t(h) * w);
    for (int in = 0; in < n; ++in)
      for (int ic = 0; ic < c; ++ic) {
        const T g = dy.at(in, ic, 0, 0) * inv;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) da.at(in, ic, y, x) = g;
      }
    return std::vector<TensorT<T>>{da};
  };
  return out;
}

template <class T>
DiffOutT<T> activation(const TensorT<T>& a, ActKind kind) {
  DiffOutT<T> out;
  out.value = apply_activation(a, kind);
  if (kind == ActKind::relu) {
    out.vjp = [x = a](const TensorT<T>& dy) {
      TensorT<T> da(x.n, x.c, x.h, x.w);
      for (std::size_t i = 0; i < x.data.size(); ++i)
        da.data[i] = x.data[i] > T(0) ? dy.data[i] : T(0);
      return std::vector<TensorT<T>>{da};
    };
  } else {
    out.vjp = [y = out.value](const TensorT<T>& dy) {
      TensorT<T> da(y.n, y.c, y.h, y.w);
      for (std::size_t i = 0; i < y.data.size(); ++i)
        da.data[i] = dy.data[i] * y.data[i] * (T(1) - y.data[i]);
      return std::vector<TensorT<T>>{da};
    };
  }
  return out;
}

#define EXSR_INSTANTIATE(T)                                                   \
  template struct TensorT<T>;                                                 \
  template TensorT<T> ew<T>(const TensorT<T>&, const TensorT<T>&, EwOp);      \
  template TensorT<T> scaled<T>(const TensorT<T>&, T);                        \
  template void add_inplace<T>(TensorT<T>&, const TensorT<T>&);               \
  template TensorT<T> channel_mean<T>(const TensorT<T>&);                     \
  template TensorT<T> apply_activation<T>(const TensorT<T>&, ActKind);        \
  template T sum_all<T>(const TensorT<T>&);                                   \
  template TensorT<T> concat_channels<T>(const TensorT<T>&, const TensorT<T>&); \
  template TensorT<T> slice_channels<T>(const TensorT<T>&, int, int);         \
  template DiffOutT<T> ew_binary<T>(const TensorT<T>&, const TensorT<T>&,     \
                                    EwOp);                                    \
  template DiffOutT<T> channel_mean_op<T>(const TensorT<T>&);                 \
  template DiffOutT<T> activation<T>(const TensorT<T>&, ActKind);

EXSR_INSTANTIATE(float)
EXSR_INSTANTIATE(double)
#undef EXSR_INSTANTIATE

}  // namespace exsr
