#include "exsr/losses.hpp"

#include <cmath>

#include "exsr/parallel.hpp"

namespace exsr {

template <class T>
ScalarLossOutT<T> charbonnier(const TensorT<T>& sr, const TensorT<T>& hr,
                              T eps) {
  if (!sr.same_shape(hr))
    throw ShapeError("charbonnier shape mismatch " + sr.shape_str() + " vs " +
                     hr.shape_str());
  if (!(eps > T(0))) throw ParamError("charbonnier eps must be positive");
  ScalarLossOutT<T> out;
  const std::size_t m = sr.numel();
  T acc = T(0);
  for (std::size_t i = 0; i < m; ++i) {
    const T diff = sr.data[i] - hr.data[i];
    acc += std::sqrt(diff * diff + eps * eps);
  }
  out.value = acc / T(m);
  out.vjp = [sr, hr, eps, m](T cot) {
    TensorT<T> g(sr.n, sr.c, sr.h, sr.w);
    for (std::size_t i = 0; i < m; ++i) {
      const T diff = sr.data[i] - hr.data[i];
      g.data[i] = cot * diff / (T(m) * std::sqrt(diff * diff + eps * eps));
    }
    return g;
  };
  return out;
}

namespace {

template <class T>
TensorT<T> center_channels(const TensorT<T>& img) {
  TensorT<T> mean = channel_mean(img);
  TensorT<T> out = img;
  const std::size_t hw = std::size_t(img.h) * img.w;
  for (int in = 0; in < img.n; ++in)
    for (int ic = 0; ic < img.c; ++ic) {
      const T mv = mean.at(in, ic, 0, 0);
      T* p = out.data.data() + out.idx(in, ic, 0, 0);
      for (std::size_t i = 0; i < hw; ++i) p[i] -= mv;
    }
  return out;
}

}  // namespace

template <class T>
TensorT<T> correlation_map_forward(const TensorT<T>& img, int k, int d) {
  if (k < 1 || k % 2 == 0)
    throw ParamError("correlation window k must be odd and >= 1, got " +
                     std::to_string(k));
  if (d < 1) throw ParamError("correlation dilation must be positive");
  const int r = (k - 1) / 2;
  TensorT<T> cen = center_channels(img);
  TensorT<T> out(img.n, k * k, img.h, img.w, T(0));
  const T norm = T(1) / T(k * k);
  // i displaces columns, j displaces rows; channel t = (i+r)*k + (j+r).
  parallel_for(std::int64_t(img.n) * k * k, [&](std::int64_t job) {
    const int t = int(job % (k * k));
    const int in = int(job / (k * k));
    const int i = t / k - r, j = t % k - r;
    T* mp = out.data.data() + out.idx(in, t, 0, 0);
    for (int y = 0; y < img.h; ++y) {
      const int ny = y - j * d;
      if (ny < 0 || ny >= img.h) continue;
      for (int x = 0; x < img.w; ++x) {
        const int nx = x - i * d;
        if (nx < 0 || nx >= img.w) continue;
        T acc = T(0);
        for (int ic = 0; ic < img.c; ++ic)
          acc += cen.at(in, ic, y, x) * cen.at(in, ic, ny, nx);
        mp[std::size_t(y) * img.w + x] = acc * norm;
      }
    }
  });
  return out;
}

template <class T>
DiffOutT<T> correlation_map(const TensorT<T>& img, int k, int d) {
  DiffOutT<T> out;
  out.value = correlation_map_forward(img, k, d);
  out.vjp = [img, k, d](const TensorT<T>& dy) {
    const int r = (k - 1) / 2;
    TensorT<T> cen = center_channels(img);
    TensorT<T> gcen(img.n, img.c, img.h, img.w, T(0));
    const T norm = T(1) / T(k * k);
    // Product rule: a map cell touches the centered image at its own pixel
    // and at the displaced neighbor; gather both roles per image pixel.
    parallel_for(std::int64_t(img.n) * img.c, [&](std::int64_t job) {
      const int ic = int(job % img.c);
      const int in = int(job / img.c);
      for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
          T acc = T(0);
          for (int t = 0; t < k * k; ++t) {
            const int i = t / k - r, j = t % k - r;
            const int ny = y - j * d, nx = x - i * d;
            if (ny >= 0 && ny < img.h && nx >= 0 && nx < img.w)
              acc += dy.at(in, t, y, x) * cen.at(in, ic, ny, nx);
            const int py = y + j * d, px = x + i * d;
            if (py >= 0 && py < img.h && px >= 0 && px < img.w)
              acc += dy.at(in, t, py, px) * cen.at(in, ic, py, px);
          }
          gcen.at(in, ic, y, x) = acc * norm;
        }
    });
    // through the mean subtraction
    TensorT<T> g(img.n, img.c, img.h, img.w);
    const std::size_t hw = std::size_t(img.h) * img.w;
    for (int in = 0; in < img.n; ++in)
      for (int ic = 0; ic < img.c; ++ic) {
        const T* gc = gcen.data.data() + gcen.idx(in, ic, 0, 0);
        T* gp = g.data.data() + g.idx(in, ic, 0, 0);
        T s = T(0);
        for (std::size_t i2 = 0; i2 < hw; ++i2) s += gc[i2];
        const T sub = s / T(hw);
        for (std::size_t i2 = 0; i2 < hw; ++i2) gp[i2] = gc[i2] - sub;
      }
    return std::vector<TensorT<T>>{g};
  };
  return out;
}

template <class T>
ScalarLossOutT<T> correlation_loss(const TensorT<T>& sr, const TensorT<T>& hr,
                                   int k, int d) {
  if (!sr.same_shape(hr))
    throw ShapeError("correlation_loss shape mismatch " + sr.shape_str() +
                     " vs " + hr.shape_str());
  auto map_sr = correlation_map(sr, k, d);
  TensorT<T> map_hr = correlation_map_forward(hr, k, d);
  const std::size_t m = map_hr.numel();
  T acc = T(0);
  for (std::size_t i = 0; i < m; ++i)
    acc += std::abs(map_sr.value.data[i] - map_hr.data[i]);
  ScalarLossOutT<T> out;
  out.value = acc / T(m);
  out.vjp = [msr = map_sr.value, map_hr, vjp = map_sr.vjp, m](T cot) {
    TensorT<T> dmap(msr.n, msr.c, msr.h, msr.w);
    const T s = cot / T(m);
    for (std::size_t i = 0; i < m; ++i) {
      const T diff = msr.data[i] - map_hr.data[i];
      dmap.data[i] = diff > T(0) ? s : (diff < T(0) ? -s : T(0));
    }
    return vjp(dmap)[0];
  };
  return out;
}

template <class T>
ScalarLossOutT<T> feature_l1(const TensorT<T>& fea_sr,
                             const TensorT<T>& fea_hr) {
  if (!fea_sr.same_shape(fea_hr))
    throw ShapeError("feature_l1 shape mismatch " + fea_sr.shape_str() +
                     " vs " + fea_hr.shape_str());
  const std::size_t m = fea_sr.numel();
  T acc = T(0);
  for (std::size_t i = 0; i < m; ++i)
    acc += std::abs(fea_sr.data[i] - fea_hr.data[i]);
  ScalarLossOutT<T> out;
  out.value = acc / T(m);
  out.vjp = [fea_sr, fea_hr, m](T cot) {
    TensorT<T> g(fea_sr.n, fea_sr.c, fea_sr.h, fea_sr.w);
    const T s = cot / T(m);
    for (std::size_t i = 0; i < m; ++i) {
      const T diff = fea_sr.data[i] - fea_hr.data[i];
      g.data[i] = diff > T(0) ? s : (diff < T(0) ? -s : T(0));
    }
    return g;
  };
  return out;
}

template <class T>
RelativisticLossesT<T> relativistic_losses(const TensorT<T>& logits_hr,
                                           const TensorT<T>& logits_sr) {
  if (logits_hr.numel() == 0 || logits_sr.numel() == 0)
    throw ParamError("relativistic_losses on empty batch");
  auto mean_of = [](const TensorT<T>& t) {
    T s = T(0);
    for (T v : t.data) s += v;
    return s / T(t.numel());
  };
  const T mean_hr = mean_of(logits_hr);
  const T mean_sr = mean_of(logits_sr);
  auto sigmoid = [](T v) { return T(1) / (T(1) + std::exp(-v)); };
  auto safe_log = [](T v) { return std::log(std::max(v, T(1e-12))); };

  T adv_hr = T(0), d_hr = T(0);
  for (T c : logits_hr.data) {
    const T d_ra = sigmoid(c - mean_sr);  // D_Ra(HR, SR)
    adv_hr -= safe_log(T(1) - d_ra);
    d_hr -= safe_log(d_ra);
  }
  T adv_sr = T(0), d_sr = T(0);
  for (T c : logits_sr.data) {
    const T d_ra = sigmoid(c - mean_hr);  // D_Ra(SR, HR)
    adv_sr -= safe_log(d_ra);
    d_sr -= safe_log(T(1) - d_ra);
  }
  RelativisticLossesT<T> out;
  out.adv = adv_hr / T(logits_hr.numel()) + adv_sr / T(logits_sr.numel());
  out.d = d_hr / T(logits_hr.numel()) + d_sr / T(logits_sr.numel());
  return out;
}

template <class T>
CombinedLossOutT<T> combined_loss(const TensorT<T>& sr, const TensorT<T>& hr,
                                  const TensorT<T>* fea_sr,
                                  const TensorT<T>* fea_hr,
                                  const TensorT<T>* logits_hr,
                                  const TensorT<T>* logits_sr,
                                  const LossWeightsT<T>& w, int k, int d) {
  if (w.rec < T(0) || w.adv < T(0) || w.per < T(0) || w.cor < T(0))
    throw ParamError("loss weights must be non-negative");
  CombinedLossOutT<T> out;
  auto rec = charbonnier(sr, hr);
  auto cor = correlation_loss(sr, hr, k, d);
  out.terms.rec = rec.value;
  out.terms.cor = cor.value;
  std::function<TensorT<T>(T)> per_vjp;
  if (fea_sr && fea_hr) {
    auto per = feature_l1(*fea_sr, *fea_hr);
    out.terms.per = per.value;
    per_vjp = per.vjp;
  }
  if (logits_hr && logits_sr)
    out.terms.adv = relativistic_losses(*logits_hr, *logits_sr).adv;
  out.terms.total = w.rec * out.terms.rec + w.adv * out.terms.adv +
                    w.per * out.terms.per + w.cor * out.terms.cor;
  out.grad_sr = [rv = rec.vjp, cv = cor.vjp, w]() {
    TensorT<T> g = rv(w.rec);
    if (w.cor > T(0)) add_inplace(g, cv(w.cor));
    return g;
  };
  if (per_vjp)
    out.grad_fea_sr = [pv = per_vjp, w]() { return pv(w.per); };
  return out;
}

#define EXSR_INSTANTIATE(T)                                                    \
  template ScalarLossOutT<T> charbonnier<T>(const TensorT<T>&,                 \
                                            const TensorT<T>&, T);             \
  template TensorT<T> correlation_map_forward<T>(const TensorT<T>&, int, int); \
  template DiffOutT<T> correlation_map<T>(const TensorT<T>&, int, int);        \
  template ScalarLossOutT<T> correlation_loss<T>(const TensorT<T>&,            \
                                                 const TensorT<T>&, int, int); \
  template ScalarLossOutT<T> feature_l1<T>(const TensorT<T>&,                  \
                                           const TensorT<T>&);                 \
  template RelativisticLossesT<T> relativistic_losses<T>(const TensorT<T>&,    \
                                                         const TensorT<T>&);   \
  template CombinedLossOutT<T> combined_loss<T>(                               \
      const TensorT<T>&, const TensorT<T>&, const TensorT<T>*,                 \
      const TensorT<T>*, const TensorT<T>*, const TensorT<T>*,                 \
      const LossWeightsT<T>&, int, int);

EXSR_INSTANTIATE(float)
EXSR_INSTANTIATE(double)
#undef EXSR_INSTANTIATE

}  // namespace exsr
