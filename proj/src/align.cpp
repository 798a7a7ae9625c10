#include "exsr/align.hpp"

#include <algorithm>
#include <cmath>

#include "exsr/parallel.hpp"

namespace exsr {

namespace {

// 2x box downsample (odd trailing row/col dropped).
template <class T>
TensorT<T> half_size(const TensorT<T>& x) {
  const int oh = std::max(1, x.h / 2), ow = std::max(1, x.w / 2);
  TensorT<T> out(x.n, x.c, oh, ow);
  for (int in = 0; in < x.n; ++in)
    for (int ic = 0; ic < x.c; ++ic)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          const int y0 = std::min(2 * y, x.h - 1), y1 = std::min(2 * y + 1, x.h - 1);
          const int x0 = std::min(2 * xx, x.w - 1), x1 = std::min(2 * xx + 1, x.w - 1);
          out.at(in, ic, y, xx) =
              (x.at(in, ic, y0, x0) + x.at(in, ic, y0, x1) +
               x.at(in, ic, y1, x0) + x.at(in, ic, y1, x1)) /
              T(4);
        }
  return out;
}

template <class T>
T clamped(const TensorT<T>& x, int in, int ic, int y, int xx) {
  y = y < 0 ? 0 : (y >= x.h ? x.h - 1 : y);
  xx = xx < 0 ? 0 : (xx >= x.w ? x.w - 1 : xx);
  return x.at(in, ic, y, xx);
}

struct Cand {
  double sad = 0;
  int dy = 0, dx = 0;
  bool better_than(const Cand& o) const {
    if (sad != o.sad) return sad < o.sad;
    const long my = long(dy) * dy + long(dx) * dx;
    const long mo = long(o.dy) * o.dy + long(o.dx) * o.dx;
    if (my != mo) return my < mo;
    if (dy != o.dy) return dy < o.dy;
    return dx < o.dx;
  }
};

// One pyramid level: refine the propagated flow block by block.
template <class T>
void match_level(const TensorT<T>& src, const TensorT<T>& dst, int in,
                 int radius, int block, TensorT<T>& flow) {
  const int h = dst.h, w = dst.w;
  const int by_n = (h + block - 1) / block, bx_n = (w + block - 1) / block;
  parallel_for(std::int64_t(by_n) * bx_n, [&](std::int64_t bi) {
    const int bx = int(bi % bx_n), by = int(bi / bx_n);
    const int y0 = by * block, x0 = bx * block;
    const int y1 = std::min(y0 + block, h), x1 = std::min(x0 + block, w);
    const int cy = std::min(y0 + block / 2, h - 1);
    const int cx = std::min(x0 + block / 2, w - 1);
    const int init_y = int(std::lround(double(flow.at(in, 0, cy, cx))));
    const int init_x = int(std::lround(double(flow.at(in, 1, cy, cx))));
    Cand best;
    bool first = true;
    for (int oy = -radius; oy <= radius; ++oy)
      for (int ox = -radius; ox <= radius; ++ox) {
        Cand c;
        c.dy = init_y + oy;
        c.dx = init_x + ox;
        for (int y = y0; y < y1; ++y)
          for (int xx = x0; xx < x1; ++xx)
            for (int ic = 0; ic < dst.c; ++ic)
              c.sad += std::fabs(double(dst.at(in, ic, y, xx)) -
                                 double(clamped(src, in, ic, y + c.dy,
                                                xx + c.dx)));
        if (first || c.better_than(best)) {
          best = c;
          first = false;
        }
      }
    for (int y = y0; y < y1; ++y)
      for (int xx = x0; xx < x1; ++xx) {
        flow.at(in, 0, y, xx) = T(best.dy);
        flow.at(in, 1, y, xx) = T(best.dx);
      }
  });
}

}  // namespace

template <class T>
FlowFieldT<T> block_match_flow(const TensorT<T>& src, const TensorT<T>& dst,
                               int search_radius, int block, int levels) {
  if (search_radius < 1) throw ParamError("block matching radius must be >= 1");
  if (block < 1) throw ParamError("block size must be >= 1");
  if (levels < 1) throw ParamError("pyramid levels must be >= 1");
  if (!src.same_shape(dst))
    throw ShapeError("block matching shape mismatch " + src.shape_str() +
                     " vs " + dst.shape_str());

  // keep the coarsest level at least one block wide
  int lv = levels;
  while (lv > 1 && (std::min(src.h, src.w) >> (lv - 1)) < block) --lv;

  std::vector<TensorT<T>> src_pyr{src}, dst_pyr{dst};
  for (int l = 1; l < lv; ++l) {
    src_pyr.push_back(half_size(src_pyr.back()));
    dst_pyr.push_back(half_size(dst_pyr.back()));
  }

  FlowFieldT<T> flow;
  for (int l = lv - 1; l >= 0; --l) {
    const TensorT<T>& d = dst_pyr[l];
    FlowFieldT<T> cur(d.n, 2, d.h, d.w, T(0));
    if (l < lv - 1) {
      const FlowFieldT<T>& prev = flow;
      for (int in = 0; in < d.n; ++in)
        for (int ch = 0; ch < 2; ++ch)
          for (int y = 0; y < d.h; ++y)
            for (int xx = 0; xx < d.w; ++xx)
              cur.at(in, ch, y, xx) =
                  T(2) * prev.at(in, ch, std::min(y / 2, prev.h - 1),
                                 std::min(xx / 2, prev.w - 1));
    }
    for (int in = 0; in < d.n; ++in)
      match_level(src_pyr[l], d, in, search_radius, block, cur);
    flow = std::move(cur);
  }
  return flow;
}

template <class T>
AlignOutT<T> rfa_align(const TensorT<T>& f_ref, const TensorT<T>& f_lr,
                       const FlowFieldT<T>* flow, const AlignParamsT<T>& p) {
  if (!f_ref.same_shape(f_lr))
    throw ShapeError("rfa_align feature shape mismatch " + f_ref.shape_str() +
                     " vs " + f_lr.shape_str());
  if (p.mode == AlignMode::large && flow == nullptr)
    throw ConfigError("large alignment mode requires a flow field");
  const int k = p.dconv.weight.h;
  if (p.offset2.weight.n != 2 * k * k)
    throw ShapeError("offset head must emit 2*K*K channels");

  WarpOutT<T> warped;
  const bool large = p.mode == AlignMode::large;
  if (large) warped = bilinear_warp(f_ref, *flow);
  TensorT<T> cat = concat_channels(large ? warped.value : f_ref, f_lr);
  auto c1 = conv2d(cat, p.offset1);
  auto act = activation(c1.value, ActKind::relu);
  auto c2 = conv2d(act.value, p.offset2);
  DeformOffsetsT<T> off = c2.value;
  if (large) {
    // flow rides on every tap identically
    const std::size_t hw = std::size_t(off.h) * off.w;
    for (int in = 0; in < off.n; ++in) {
      const T* fy = flow->data.data() + flow->idx(in, 0, 0, 0);
      const T* fx = flow->data.data() + flow->idx(in, 1, 0, 0);
      for (int t = 0; t < k * k; ++t) {
        T* oy = off.data.data() + off.idx(in, 2 * t, 0, 0);
        T* ox = off.data.data() + off.idx(in, 2 * t + 1, 0, 0);
        for (std::size_t i = 0; i < hw; ++i) {
          oy[i] += fy[i];
          ox[i] += fx[i];
        }
      }
    }
  }
  auto dc = deformable_conv(f_ref, p.dconv, off);

  AlignOutT<T> out;
  out.value = dc.value;
  const int cf = f_ref.c;
  out.vjp = [dc_vjp = dc.vjp, c2_vjp = c2.vjp, act_vjp = act.vjp,
             c1_vjp = c1.vjp, warped, large, cf](const TensorT<T>& dy) {
    AlignGradsT<T> g;
    auto gd = dc_vjp(dy);
    g.dconv_w = std::move(gd.weight);
    g.dconv_b = std::move(gd.bias);
    auto g2 = c2_vjp(gd.offsets);  // the flow add is constant, pass through
    g.offset2_w = std::move(g2.weight);
    g.offset2_b = std::move(g2.bias);
    auto ga = act_vjp(g2.x);
    auto g1 = c1_vjp(ga[0]);
    g.offset1_w = std::move(g1.weight);
    g.offset1_b = std::move(g1.bias);
    TensorT<T> d_first = slice_channels(g1.x, 0, cf);
    g.f_lr = slice_channels(g1.x, cf, cf);
    g.f_ref = std::move(gd.x);
    if (large) {
      auto gw = warped.vjp(d_first);  // flow cotangent intentionally dropped
      add_inplace(g.f_ref, gw.x);
    } else {
      add_inplace(g.f_ref, d_first);
    }
    return g;
  };
  return out;
}

template <class T>
SimilarityOutT<T> similarity_score(const TensorT<T>& f_ref_a,
                                   const TensorT<T>& f_lr,
                                   const SimilarityParamsT<T>& p) {
  if (!f_ref_a.same_shape(f_lr))
    throw ShapeError("similarity_score shape mismatch " + f_ref_a.shape_str() +
                     " vs " + f_lr.shape_str());
  if (p.g1.weight.n != p.g2.weight.n)
    throw ShapeError("similarity embeddings must share output width");
  auto e1 = conv2d(f_ref_a, p.g1);
  auto e2 = conv2d(f_lr, p.g2);
  const int ce = e1.value.c;
  TensorT<T> dot(f_ref_a.n, 1, f_ref_a.h, f_ref_a.w, T(0));
  const std::size_t hw = std::size_t(f_ref_a.h) * f_ref_a.w;
  for (int in = 0; in < f_ref_a.n; ++in) {
    T* dp = dot.data.data() + dot.idx(in, 0, 0, 0);
    for (int ic = 0; ic < ce; ++ic) {
      const T* a = e1.value.data.data() + e1.value.idx(in, ic, 0, 0);
      const T* b = e2.value.data.data() + e2.value.idx(in, ic, 0, 0);
      for (std::size_t i = 0; i < hw; ++i) dp[i] += a[i] * b[i];
    }
  }
  auto sig = activation(dot, ActKind::sigmoid);

  SimilarityOutT<T> out;
  out.value = sig.value;
  out.vjp = [sig_vjp = sig.vjp, e1v = e1.value, e2v = e2.value,
             e1_vjp = e1.vjp, e2_vjp = e2.vjp, ce, hw](const TensorT<T>& dy) {
    TensorT<T> d_dot = sig_vjp(dy)[0];
    TensorT<T> d_e1(e1v.n, e1v.c, e1v.h, e1v.w);
    TensorT<T> d_e2(e2v.n, e2v.c, e2v.h, e2v.w);
    for (int in = 0; in < e1v.n; ++in) {
      const T* dd = d_dot.data.data() + d_dot.idx(in, 0, 0, 0);
      for (int ic = 0; ic < ce; ++ic) {
        const T* a = e1v.data.data() + e1v.idx(in, ic, 0, 0);
        const T* b = e2v.data.data() + e2v.idx(in, ic, 0, 0);
        T* da = d_e1.data.data() + d_e1.idx(in, ic, 0, 0);
        T* db = d_e2.data.data() + d_e2.idx(in, ic, 0, 0);
        for (std::size_t i = 0; i < hw; ++i) {
          da[i] = dd[i] * b[i];
          db[i] = dd[i] * a[i];
        }
      }
    }
    SimilarityGradsT<T> g;
    auto g1 = e1_vjp(d_e1);
    auto g2 = e2_vjp(d_e2);
    g.f_ref_a = std::move(g1.x);
    g.f_lr = std::move(g2.x);
    g.g1_w = std::move(g1.weight);
    g.g1_b = std::move(g1.bias);
    g.g2_w = std::move(g2.weight);
    g.g2_b = std::move(g2.bias);
    return g;
  };
  return out;
}

namespace {

// Sum a tiny addend set in a value-canonical order: bitwise identical for
// any input permutation.
inline long double canonical_sum(long double* v, int n) {
  std::sort(v, v + n);
  long double acc = 0.0L;
  for (int i = 0; i < n; ++i) acc += v[i];
  return acc;
}

template <class T>
void check_set(const std::vector<TensorT<T>>& aligned) {
  if (aligned.empty()) throw ParamError("aggregation over an empty set");
  for (std::size_t i = 1; i < aligned.size(); ++i)
    if (!aligned[i].same_shape(aligned[0]))
      throw ShapeError("aggregation set member " + std::to_string(i) +
                       " has shape " + aligned[i].shape_str() + " vs " +
                       aligned[0].shape_str());
}

}  // namespace

template <class T>
AggregateOutT<T> cofa_aggregate(const std::vector<TensorT<T>>& aligned,
                                const std::vector<TensorT<T>>& scores) {
  check_set(aligned);
  if (scores.size() != aligned.size())
    throw ParamError("aggregation needs one score map per feature");
  const auto& f0 = aligned[0];
  for (const auto& s : scores)
    if (s.n != f0.n || s.c != 1 || s.h != f0.h || s.w != f0.w)
      throw ShapeError("score map must be (N,1,H,W), got " + s.shape_str());

  const int ns = int(aligned.size());
  AggregateOutT<T> out;
  if (ns == 1) {
    out.value = aligned[0];
    out.vjp = [shape = scores[0]](const TensorT<T>& dy) {
      SetGradsT<T> g;
      g.features = {dy};
      g.scores = {TensorT<T>(shape.n, 1, shape.h, shape.w, T(0))};
      return g;
    };
    return out;
  }

  TensorT<T> den(f0.n, 1, f0.h, f0.w);
  TensorT<T> value(f0.n, f0.c, f0.h, f0.w);
  const std::size_t hw = std::size_t(f0.h) * f0.w;
  parallel_for(f0.n, [&](std::int64_t in_) {
    const int in = int(in_);
    std::vector<long double> buf(ns);
    T* dp = den.data.data() + den.idx(in, 0, 0, 0);
    for (std::size_t i = 0; i < hw; ++i) {
      for (int s = 0; s < ns; ++s)
        buf[s] = (long double)(scores[s].data[scores[s].idx(in, 0, 0, 0) + i]);
      dp[i] = T(canonical_sum(buf.data(), ns));
    }
    for (int ic = 0; ic < f0.c; ++ic) {
      T* vp = value.data.data() + value.idx(in, ic, 0, 0);
      for (std::size_t i = 0; i < hw; ++i) {
        for (int s = 0; s < ns; ++s) {
          const T mu = scores[s].data[scores[s].idx(in, 0, 0, 0) + i];
          const T fv = aligned[s].data[aligned[s].idx(in, ic, 0, 0) + i];
          buf[s] = (long double)mu * (long double)fv;
        }
        const long double num = canonical_sum(buf.data(), ns);
        for (int s = 0; s < ns; ++s)
          buf[s] = (long double)(scores[s].data[scores[s].idx(in, 0, 0, 0) + i]);
        vp[i] = T(num / canonical_sum(buf.data(), ns));
      }
    }
  });

  out.value = value;
  out.vjp = [aligned, scores, den, value, ns](const TensorT<T>& dy) {
    SetGradsT<T> g;
    const auto& f0 = aligned[0];
    const std::size_t hw = std::size_t(f0.h) * f0.w;
    for (int s = 0; s < ns; ++s) {
      TensorT<T> df(f0.n, f0.c, f0.h, f0.w);
      TensorT<T> dmu(f0.n, 1, f0.h, f0.w, T(0));
      for (int in = 0; in < f0.n; ++in) {
        const T* dp = den.data.data() + den.idx(in, 0, 0, 0);
        const T* mu = scores[s].data.data() + scores[s].idx(in, 0, 0, 0);
        T* dmup = dmu.data.data() + dmu.idx(in, 0, 0, 0);
        for (int ic = 0; ic < f0.c; ++ic) {
          const T* gd = dy.data.data() + dy.idx(in, ic, 0, 0);
          const T* fv = aligned[s].data.data() + aligned[s].idx(in, ic, 0, 0);
          const T* av = value.data.data() + value.idx(in, ic, 0, 0);
          T* dfp = df.data.data() + df.idx(in, ic, 0, 0);
          for (std::size_t i = 0; i < hw; ++i) {
            dfp[i] = gd[i] * mu[i] / dp[i];
            dmup[i] += gd[i] * (fv[i] - av[i]) / dp[i];
          }
        }
      }
      g.features.push_back(std::move(df));
      g.scores.push_back(std::move(dmu));
    }
    return g;
  };
  return out;
}

template <class T>
AggregateOutT<T> aggregate_baseline(const std::vector<TensorT<T>>& aligned,
                                    AggMode kind) {
  check_set(aligned);
  if (kind == AggMode::cofa)
    throw ParamError("aggregate_baseline handles average/maxpool only");
  const auto& f0 = aligned[0];
  const int ns = int(aligned.size());
  AggregateOutT<T> out;
  if (kind == AggMode::average) {
    TensorT<T> acc = aligned[0];
    for (int s = 1; s < ns; ++s) add_inplace(acc, aligned[s]);
    out.value = scaled(acc, T(1) / T(ns));
    out.vjp = [ns](const TensorT<T>& dy) {
      SetGradsT<T> g;
      TensorT<T> share = scaled(dy, T(1) / T(ns));
      for (int s = 0; s < ns; ++s) g.features.push_back(share);
      return g;
    };
  } else {
    TensorT<T> value = aligned[0];
    std::vector<std::uint8_t> arg(f0.numel(), 0);
    for (int s = 1; s < ns; ++s)
      for (std::size_t i = 0; i < value.data.size(); ++i)
        if (aligned[s].data[i] > value.data[i]) {
          value.data[i] = aligned[s].data[i];
          arg[i] = std::uint8_t(s);
        }
    out.value = value;
    out.vjp = [arg, ns, f0](const TensorT<T>& dy) {
      SetGradsT<T> g;
      for (int s = 0; s < ns; ++s)
        g.features.emplace_back(f0.n, f0.c, f0.h, f0.w, T(0));
      for (std::size_t i = 0; i < dy.data.size(); ++i)
        g.features[arg[i]].data[i] = dy.data[i];
      return g;
    };
  }
  return out;
}

#define EXSR_INSTANTIATE(T)                                                    \
  template FlowFieldT<T> block_match_flow<T>(const TensorT<T>&,                \
                                             const TensorT<T>&, int, int,     \
                                             int);                             \
  template AlignOutT<T> rfa_align<T>(const TensorT<T>&, const TensorT<T>&,     \
                                     const FlowFieldT<T>*,                     \
                                     const AlignParamsT<T>&);                  \
  template SimilarityOutT<T> similarity_score<T>(const TensorT<T>&,            \
                                                 const TensorT<T>&,            \
                                                 const SimilarityParamsT<T>&); \
  template AggregateOutT<T> cofa_aggregate<T>(const std::vector<TensorT<T>>&,  \
                                              const std::vector<TensorT<T>>&); \
  template AggregateOutT<T> aggregate_baseline<T>(                             \
      const std::vector<TensorT<T>>&, AggMode);

EXSR_INSTANTIATE(float)
EXSR_INSTANTIATE(double)
#undef EXSR_INSTANTIATE

}  // namespace exsr
