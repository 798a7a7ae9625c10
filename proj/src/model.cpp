#include "exsr/model.hpp"

#include <json.hpp>

#include "exsr/rearrange.hpp"
#include "exsr/resize.hpp"
#include "exsr/rng.hpp"
#include "exsr/tensor_io.hpp"

namespace exsr {

std::string to_string(AlignChoice a) {
  switch (a) {
    case AlignChoice::conv: return "conv";
    case AlignChoice::small: return "small";
    default: return "large";
  }
}

std::string to_string(AggMode a) {
  switch (a) {
    case AggMode::cofa: return "cofa";
    case AggMode::average: return "average";
    default: return "maxpool";
  }
}

AlignChoice align_choice_from_string(const std::string& s) {
  if (s == "conv") return AlignChoice::conv;
  if (s == "small") return AlignChoice::small;
  if (s == "large") return AlignChoice::large;
  throw ConfigError("unknown alignment mode: " + s);
}

AggMode agg_mode_from_string(const std::string& s) {
  if (s == "cofa") return AggMode::cofa;
  if (s == "average") return AggMode::average;
  if (s == "maxpool") return AggMode::maxpool;
  throw ConfigError("unknown aggregation mode: " + s);
}

void ModelConfig::validate() const {
  if (scale != 2 && scale != 4 && scale != 8)
    throw ConfigError("scale must be 2, 4 or 8, got " + std::to_string(scale));
  if (n_refs < 0) throw ConfigError("n_refs must be >= 0");
  if (lr_blocks < 0 || ref_blocks < 0 || recon_blocks < 0)
    throw ConfigError("block counts must be >= 0");
  if (feat_width < 1) throw ConfigError("feat_width must be >= 1");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["agg"] = to_string(agg);
  j["align"] = to_string(align);
  j["feat_width"] = feat_width;
  j["lr_blocks"] = lr_blocks;
  j["n_refs"] = n_refs;
  j["recon_blocks"] = recon_blocks;
  j["ref_blocks"] = ref_blocks;
  j["scale"] = scale;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& s) {
  ModelConfig cfg;
  try {
    auto j = nlohmann::json::parse(s);
    cfg.agg = agg_mode_from_string(j.at("agg").get<std::string>());
    cfg.align = align_choice_from_string(j.at("align").get<std::string>());
    cfg.feat_width = j.at("feat_width").get<int>();
    cfg.lr_blocks = j.at("lr_blocks").get<int>();
    cfg.n_refs = j.at("n_refs").get<int>();
    cfg.recon_blocks = j.at("recon_blocks").get<int>();
    cfg.ref_blocks = j.at("ref_blocks").get<int>();
    cfg.scale = j.at("scale").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model config JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.scale = 4;
  cfg.n_refs = 3;
  cfg.lr_blocks = 2;
  cfg.ref_blocks = 1;
  cfg.recon_blocks = 4;
  cfg.feat_width = 16;
  return cfg;
}

namespace {

constexpr int kDeformK = 3;

template <class T>
ConvLayerT<T> add_conv(ModelT<T>& m, const std::string& name, int c_in,
                       int c_out, int k, Rng& rng, bool icnr = false,
                       int r = 1) {
  ConvLayerT<T> layer;
  layer.stride = 1;
  layer.pad = (k - 1) / 2;
  TensorT<T> w = icnr ? icnr_init<T>(c_out, c_in, k, r, rng)
                      : fanin_uniform<T>(c_out, c_in, k, rng);
  layer.w = m.params.add(name + ".weight", std::move(w));
  layer.b = m.params.add(name + ".bias", TensorT<T>(1, c_out, 1, 1, T(0)));
  return layer;
}

template <class T>
ResBlockRefT<T> add_block(ModelT<T>& m, const std::string& name, int width,
                          Rng& rng) {
  ResBlockRefT<T> b;
  b.conv1 = add_conv(m, name + ".conv1", width, width, 3, rng);
  b.conv2 = add_conv(m, name + ".conv2", width, width, 3, rng);
  return b;
}

int up_stage_count(int scale) {
  int n = 0;
  for (int s = scale; s > 1; s /= 2) ++n;
  return n;
}

// Compose a chain of per-layer backward closures into one.
template <class T>
BackFn<T> compose(std::vector<BackFn<T>> backs) {
  return [backs = std::move(backs)](const TensorT<T>& dy) {
    TensorT<T> g = dy;
    for (auto it = backs.rbegin(); it != backs.rend(); ++it) g = (*it)(g);
    return g;
  };
}

template <class T>
TensorT<T> layer_fwd(const ConvLayerT<T>& L, const TensorT<T>& x,
                     std::vector<BackFn<T>>* backs) {
  auto r = conv2d(x, L.params());
  if (backs)
    backs->push_back([vjp = r.vjp, w = L.w, b = L.b](const TensorT<T>& dy) {
      auto g = vjp(dy);
      add_inplace(w->grad, g.weight);
      add_inplace(b->grad, g.bias);
      return std::move(g.x);
    });
  return r.value;
}

template <class T>
TensorT<T> block_fwd(const ResBlockRefT<T>& blk, const TensorT<T>& x,
                     std::vector<BackFn<T>>* backs) {
  auto r = residual_block(x, blk.conv1.params(), blk.conv2.params());
  if (backs)
    backs->push_back([vjp = r.vjp, w1 = blk.conv1.w, b1 = blk.conv1.b,
                      w2 = blk.conv2.w, b2 = blk.conv2.b](const TensorT<T>& dy) {
      auto g = vjp(dy);
      add_inplace(w1->grad, g.w1);
      add_inplace(b1->grad, g.b1);
      add_inplace(w2->grad, g.w2);
      add_inplace(b2->grad, g.b2);
      return std::move(g.x);
    });
  return r.value;
}

}  // namespace

template <class T>
ModelT<T> make_model(const ModelConfig& cfg) {
  cfg.validate();
  ModelT<T> m;
  m.cfg = cfg;
  Rng rng(cfg.seed);
  const int cf = cfg.feat_width;

  m.lr_head = add_conv(m, "lr_extract.head", 3, cf, 3, rng);
  for (int i = 0; i < cfg.lr_blocks; ++i)
    m.lr_blocks.push_back(
        add_block(m, "lr_extract.block" + std::to_string(i), cf, rng));

  if (cfg.n_refs > 0) {
    m.ref_mono = add_conv(m, "ref_extract.mono", 3, 1, 1, rng);
    m.ref_head =
        add_conv(m, "ref_extract.head", cfg.scale * cfg.scale, cf, 3, rng);
    for (int i = 0; i < cfg.ref_blocks; ++i)
      m.ref_blocks.push_back(
          add_block(m, "ref_extract.block" + std::to_string(i), cf, rng));
    if (cfg.align != AlignChoice::conv) {
      m.off1 = add_conv(m, "align.offset1", 2 * cf, cf, 3, rng);
      m.off2 = add_conv(m, "align.offset2", cf, 2 * kDeformK * kDeformK, 3, rng);
      // damp the offset head so sampling starts near the nominal taps;
      // full-scale random offsets destabilize early deformable training
      for (auto& v : m.off2.w->value.data) v *= T(0.1);
    }
    m.dconv = add_conv(m, "align.dconv", cf, cf, 3, rng);
    if (cfg.agg == AggMode::cofa) {
      m.g1 = add_conv(m, "agg.g1", cf, cf, 1, rng);
      m.g2 = add_conv(m, "agg.g2", cf, cf, 1, rng);
    }
  }

  for (int i = 0; i < cfg.recon_blocks; ++i)
    m.recon_blocks.push_back(
        add_block(m, "recon.block" + std::to_string(i), cf, rng));
  const int stages = up_stage_count(cfg.scale);
  for (int i = 0; i < stages; ++i)
    m.up_stages.push_back(add_conv(m, "recon.up" + std::to_string(i), cf,
                                   4 * cf, 3, rng, /*icnr=*/true, /*r=*/2));
  m.out_conv = add_conv(m, "recon.out", cf, 3, 3, rng);
  return m;
}

template <class T>
std::size_t total_param_scalars(const ModelT<T>& m) {
  std::size_t total = 0;
  m.params.for_each([&](const ParamT<T>& p) { total += p.value.numel(); });
  return total;
}

template <class T>
TensorT<T> extract_lr(const ModelT<T>& m, const TensorT<T>& i_lr,
                      BackFn<T>* back) {
  if (i_lr.c != 3)
    throw ShapeError("LR input must have 3 channels, got " + i_lr.shape_str());
  std::vector<BackFn<T>> backs;
  auto* bp = back ? &backs : nullptr;
  TensorT<T> f = layer_fwd(m.lr_head, i_lr, bp);
  for (const auto& blk : m.lr_blocks) f = block_fwd(blk, f, bp);
  if (back) *back = compose(std::move(backs));
  return f;
}

template <class T>
TensorT<T> extract_ref(const ModelT<T>& m, const TensorT<T>& i_ref,
                       BackFn<T>* back) {
  if (m.cfg.n_refs == 0)
    throw ConfigError("model was built without a reference path");
  if (i_ref.c != 3)
    throw ShapeError("reference must have 3 channels, got " +
                     i_ref.shape_str());
  const int s = m.cfg.scale;
  if (i_ref.h % s != 0 || i_ref.w % s != 0)
    throw ShapeError("reference size " + i_ref.shape_str() +
                     " not divisible by scale " + std::to_string(s));
  std::vector<BackFn<T>> backs;
  auto* bp = back ? &backs : nullptr;
  TensorT<T> f = layer_fwd(m.ref_mono, i_ref, bp);
  auto s2d = space_to_depth(f, s);
  if (bp)
    bp->push_back([vjp = s2d.vjp](const TensorT<T>& dy) { return vjp(dy)[0]; });
  f = s2d.value;
  f = layer_fwd(m.ref_head, f, bp);
  for (const auto& blk : m.ref_blocks) f = block_fwd(blk, f, bp);
  if (back) *back = compose(std::move(backs));
  return f;
}

template <class T>
TensorT<T> reconstruct(const ModelT<T>& m, const TensorT<T>& f_f,
                       BackFn<T>* back) {
  if (f_f.c != m.cfg.feat_width)
    throw ShapeError("reconstruct expects " +
                     std::to_string(m.cfg.feat_width) + " channels, got " +
                     f_f.shape_str());
  std::vector<BackFn<T>> backs;
  auto* bp = back ? &backs : nullptr;
  TensorT<T> f = f_f;
  for (const auto& blk : m.recon_blocks) f = block_fwd(blk, f, bp);
  for (const auto& up : m.up_stages) {
    f = layer_fwd(up, f, bp);
    auto ps = pixel_shuffle(f, 2);
    if (bp)
      bp->push_back(
          [vjp = ps.vjp](const TensorT<T>& dy) { return vjp(dy)[0]; });
    f = ps.value;
  }
  f = layer_fwd(m.out_conv, f, bp);
  if (back) *back = compose(std::move(backs));
  return f;
}

template <class T>
TensorT<T> sr_forward(const ModelT<T>& m, const TensorT<T>& i_lr,
                      const std::vector<TensorT<T>>& refs,
                      const std::vector<FlowFieldT<T>>* flows,
                      ForwardTrace<T>* trace) {
  const int s = m.cfg.scale;
  const bool use_refs = !refs.empty();
  if (use_refs && m.cfg.n_refs == 0)
    throw ConfigError("model was built without a reference path");
  const bool large = m.cfg.align == AlignChoice::large;
  if (use_refs && large) {
    if (!flows || flows->size() != refs.size())
      throw ConfigError("large alignment needs one flow per reference (" +
                        std::to_string(refs.size()) + " refs)");
  }
  for (const auto& r : refs)
    if (r.n != i_lr.n || r.c != 3 || r.h != i_lr.h * s || r.w != i_lr.w * s)
      throw ShapeError("reference " + r.shape_str() + " does not match LR " +
                       i_lr.shape_str() + " at scale " + std::to_string(s));

  auto skip = bicubic_resize(i_lr, double(s));
  BackFn<T> back_lr;
  TensorT<T> f_l = extract_lr(m, i_lr, trace ? &back_lr : nullptr);

  std::vector<BackFn<T>> back_refs;
  std::vector<std::function<AlignGradsT<T>(const TensorT<T>&)>> align_vjps;
  std::vector<BackFn<T>> conv_align_backs;
  std::vector<std::function<SimilarityGradsT<T>(const TensorT<T>&)>> sim_vjps;
  std::function<SetGradsT<T>(const TensorT<T>&)> agg_vjp;

  TensorT<T> f_f;
  if (use_refs) {
    std::vector<TensorT<T>> aligned, scores;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      BackFn<T> br;
      TensorT<T> f_ref = extract_ref(m, refs[i], trace ? &br : nullptr);
      if (trace) back_refs.push_back(std::move(br));
      TensorT<T> al;
      if (m.cfg.align == AlignChoice::conv) {
        auto c = conv2d(f_ref, m.dconv.params());
        al = c.value;
        if (trace)
          conv_align_backs.push_back([vjp = c.vjp, w = m.dconv.w,
                                      b = m.dconv.b](const TensorT<T>& dy) {
            auto g = vjp(dy);
            add_inplace(w->grad, g.weight);
            add_inplace(b->grad, g.bias);
            return std::move(g.x);
          });
      } else {
        AlignParamsT<T> ap{m.off1.params(), m.off2.params(), m.dconv.params(),
                           large ? AlignMode::large : AlignMode::small};
        auto a = rfa_align(f_ref, f_l, large ? &(*flows)[i] : nullptr, ap);
        al = a.value;
        if (trace) align_vjps.push_back(a.vjp);
      }
      if (m.cfg.agg == AggMode::cofa) {
        SimilarityParamsT<T> sp{m.g1.params(), m.g2.params()};
        auto sc = similarity_score(al, f_l, sp);
        scores.push_back(sc.value);
        if (trace) sim_vjps.push_back(sc.vjp);
      }
      aligned.push_back(std::move(al));
    }
    auto agg = m.cfg.agg == AggMode::cofa
                   ? cofa_aggregate(aligned, scores)
                   : aggregate_baseline(aligned, m.cfg.agg);
    if (trace) agg_vjp = agg.vjp;
    f_f = ew(agg.value, f_l, EwOp::add);
  } else {
    f_f = f_l;
  }

  BackFn<T> back_recon;
  TensorT<T> residual = reconstruct(m, f_f, trace ? &back_recon : nullptr);
  if (!residual.same_shape(skip.value))
    throw ShapeError("residual " + residual.shape_str() +
                     " does not match skip " + skip.value.shape_str());
  TensorT<T> sr = ew(skip.value, residual, EwOp::add);

  if (trace) {
    const bool cofa = m.cfg.agg == AggMode::cofa;
    const bool conv_abl = m.cfg.align == AlignChoice::conv;
    ParamT<T>*off1w = m.off1.w, *off1b = m.off1.b, *off2w = m.off2.w,
             *off2b = m.off2.b, *dconvw = m.dconv.w, *dconvb = m.dconv.b,
             *g1w = m.g1.w, *g1b = m.g1.b, *g2w = m.g2.w, *g2b = m.g2.b;
    trace->backward = [=, skip_vjp = skip.vjp,
                       n_set = int(refs.size())](const TensorT<T>& d_sr) {
      TensorT<T> d_i_lr = skip_vjp(d_sr)[0];
      TensorT<T> d_ff = back_recon(d_sr);
      TensorT<T> d_fl;
      if (use_refs) {
        d_fl = d_ff;  // F_f = F_a + F_L
        SetGradsT<T> sg = agg_vjp(d_ff);
        for (int i = n_set - 1; i >= 0; --i) {
          TensorT<T> d_al = std::move(sg.features[i]);
          if (cofa) {
            auto gs = sim_vjps[i](sg.scores[i]);
            add_inplace(d_al, gs.f_ref_a);
            add_inplace(d_fl, gs.f_lr);
            add_inplace(g1w->grad, gs.g1_w);
            add_inplace(g1b->grad, gs.g1_b);
            add_inplace(g2w->grad, gs.g2_w);
            add_inplace(g2b->grad, gs.g2_b);
          }
          TensorT<T> d_fref;
          if (conv_abl) {
            d_fref = conv_align_backs[i](d_al);
          } else {
            auto ga = align_vjps[i](d_al);
            d_fref = std::move(ga.f_ref);
            add_inplace(d_fl, ga.f_lr);
            add_inplace(off1w->grad, ga.offset1_w);
            add_inplace(off1b->grad, ga.offset1_b);
            add_inplace(off2w->grad, ga.offset2_w);
            add_inplace(off2b->grad, ga.offset2_b);
            add_inplace(dconvw->grad, ga.dconv_w);
            add_inplace(dconvb->grad, ga.dconv_b);
          }
          back_refs[i](d_fref);  // reference images take no gradient
        }
      } else {
        d_fl = d_ff;
      }
      add_inplace(d_i_lr, back_lr(d_fl));
      return d_i_lr;
    };
  }
  return sr;
}

void save_checkpoint(const Model& m, const std::string& path) {
  std::string buf;
  buf.append("HMC1", 4);
  const std::string cfg = m.cfg.to_json();
  const std::uint32_t len = std::uint32_t(cfg.size());
  char lb[4] = {char(len & 0xff), char((len >> 8) & 0xff),
                char((len >> 16) & 0xff), char((len >> 24) & 0xff)};
  buf.append(lb, 4);
  buf.append(cfg);
  m.params.for_each([&](const Param& p) {
    const std::uint32_t il = std::uint32_t(p.id.size());
    char ib[4] = {char(il & 0xff), char((il >> 8) & 0xff),
                  char((il >> 16) & 0xff), char((il >> 24) & 0xff)};
    buf.append(ib, 4);
    buf.append(p.id);
    append_htf(p.value, buf);
  });
  atomic_write_file(path, buf);
}

Model load_checkpoint(const std::string& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 8 || buf.compare(0, 4, "HMC1") != 0)
    throw FormatError("bad checkpoint magic in " + path);
  std::size_t pos = 4;
  auto b = reinterpret_cast<const unsigned char*>(buf.data() + pos);
  const std::uint32_t len = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                            (std::uint32_t(b[2]) << 16) |
                            (std::uint32_t(b[3]) << 24);
  pos += 4;
  if (pos + len > buf.size()) throw FormatError("checkpoint config truncated");
  ModelConfig cfg = ModelConfig::from_json(buf.substr(pos, len));
  pos += len;
  Model m = make_model<float>(cfg);
  std::size_t seen = 0;
  while (pos < buf.size()) {
    if (pos + 4 > buf.size()) throw FormatError("checkpoint id truncated");
    auto ib = reinterpret_cast<const unsigned char*>(buf.data() + pos);
    const std::uint32_t il = std::uint32_t(ib[0]) | (std::uint32_t(ib[1]) << 8) |
                             (std::uint32_t(ib[2]) << 16) |
                             (std::uint32_t(ib[3]) << 24);
    pos += 4;
    if (pos + il > buf.size()) throw FormatError("checkpoint id truncated");
    const std::string id = buf.substr(pos, il);
    pos += il;
    HtfAny t = parse_htf(buf, pos);
    Param* p = m.params.find(id);
    if (!p) throw FormatError("checkpoint carries unknown param " + id);
    Tensor v = t.as_f32();
    if (!v.same_shape(p->value))
      throw FormatError("checkpoint shape mismatch for " + id + ": " +
                        v.shape_str() + " vs " + p->value.shape_str());
    p->value = std::move(v);
    ++seen;
  }
  if (seen != m.params.size())
    throw FormatError("checkpoint has " + std::to_string(seen) +
                      " tensors, model needs " +
                      std::to_string(m.params.size()));
  return m;
}

template <class T>
FrozenExtractorT<T> snapshot_lr_extractor(const ModelT<T>& m) {
  FrozenExtractorT<T> fe;
  fe.head = m.lr_head.params();
  for (const auto& blk : m.lr_blocks)
    fe.blocks.push_back({blk.conv1.params(), blk.conv2.params()});
  return fe;
}

template <class T>
TensorT<T> frozen_extract(const FrozenExtractorT<T>& fe, const TensorT<T>& x,
                          BackFn<T>* back) {
  std::vector<BackFn<T>> backs;
  auto* bp = back ? &backs : nullptr;
  auto head = conv2d(x, fe.head);
  if (bp)
    bp->push_back(
        [vjp = head.vjp](const TensorT<T>& dy) { return vjp(dy).x; });
  TensorT<T> f = head.value;
  for (const auto& blk : fe.blocks) {
    auto r = residual_block(f, blk[0], blk[1]);
    if (bp)
      bp->push_back([vjp = r.vjp](const TensorT<T>& dy) { return vjp(dy).x; });
    f = r.value;
  }
  if (back) *back = compose(std::move(backs));
  return f;
}

#define EXSR_INSTANTIATE(T)                                                    \
  template ModelT<T> make_model<T>(const ModelConfig&);                        \
  template std::size_t total_param_scalars<T>(const ModelT<T>&);               \
  template TensorT<T> extract_lr<T>(const ModelT<T>&, const TensorT<T>&,       \
                                    BackFn<T>*);                               \
  template TensorT<T> extract_ref<T>(const ModelT<T>&, const TensorT<T>&,      \
                                     BackFn<T>*);                              \
  template TensorT<T> reconstruct<T>(const ModelT<T>&, const TensorT<T>&,      \
                                     BackFn<T>*);                              \
  template TensorT<T> sr_forward<T>(                                           \
      const ModelT<T>&, const TensorT<T>&, const std::vector<TensorT<T>>&,     \
      const std::vector<FlowFieldT<T>>*, ForwardTrace<T>*);                    \
  template FrozenExtractorT<T> snapshot_lr_extractor<T>(const ModelT<T>&);     \
  template TensorT<T> frozen_extract<T>(const FrozenExtractorT<T>&,            \
                                        const TensorT<T>&, BackFn<T>*);

EXSR_INSTANTIATE(float)
EXSR_INSTANTIATE(double)
#undef EXSR_INSTANTIATE

}  // namespace exsr
