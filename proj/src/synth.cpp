#include "exsr/synth.hpp"

#include <cmath>

#include "exsr/image.hpp"
#include "exsr/resize.hpp"
#include "exsr/rng.hpp"

namespace exsr {

FlipMode flip_mode_from_string(const std::string& s) {
  if (s == "none") return FlipMode::none;
  if (s == "uneven") return FlipMode::uneven;
  if (s == "even") return FlipMode::even;
  throw ConfigError("unknown flip mode: " + s);
}

std::string to_string(FlipMode f) {
  switch (f) {
    case FlipMode::none: return "none";
    case FlipMode::uneven: return "uneven";
    default: return "even";
  }
}

void SynthSpec::validate() const {
  if (hr_size < 8) throw ConfigError("hr_size too small");
  if (scale != 2 && scale != 4 && scale != 8)
    throw ConfigError("scale must be 2, 4 or 8");
  if (hr_size % scale != 0)
    throw ConfigError("hr_size must be divisible by scale");
  if (n_refs < 0) throw ConfigError("n_refs must be >= 0");
  if (max_translate < 0 || max_rotate_deg < 0)
    throw ConfigError("transform ranges must be non-negative");
  if (!(scale_lo > 0) || scale_hi < scale_lo)
    throw ConfigError("bad similarity scale range");
  if (count < 1) throw ConfigError("texture count must be >= 1");
}

SynthDataset::SynthDataset(const SynthSpec& spec) : spec_(spec) {
  spec_.validate();
}

namespace {

constexpr std::uint64_t kTextureStream = 0x10000000ULL;
constexpr std::uint64_t kSampleStream = 0x20000000ULL;

// Bilinear sample with clamp-replicated edges.
float sample_clamped(const Tensor& img, int c, double y, double x) {
  const int h = img.h, w = img.w;
  y = y < 0 ? 0 : (y > h - 1 ? h - 1 : y);
  x = x < 0 ? 0 : (x > w - 1 ? w - 1 : x);
  const int y0 = int(std::floor(y)), x0 = int(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double ly = y - y0, lx = x - x0;
  const double top = (1 - lx) * img.at(0, c, y0, x0) + lx * img.at(0, c, y0, x1);
  const double bot = (1 - lx) * img.at(0, c, y1, x0) + lx * img.at(0, c, y1, x1);
  return float((1 - ly) * top + ly * bot);
}

// ref(p) = hr(M^-1(p)) for the similarity M about the image center.
Tensor similarity_resample(const Tensor& hr, double angle, double scale,
                           double ty, double tx) {
  Tensor out(1, 3, hr.h, hr.w);
  const double cy = (hr.h - 1) / 2.0, cx = (hr.w - 1) / 2.0;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int y = 0; y < hr.h; ++y)
    for (int x = 0; x < hr.w; ++x) {
      const double py = y - cy - ty, px = x - cx - tx;
      const double sy = (ca * py + sa * px) / scale + cy;
      const double sx = (-sa * py + ca * px) / scale + cx;
      for (int c = 0; c < 3; ++c)
        out.at(0, c, y, x) = sample_clamped(hr, c, sy, sx);
    }
  return out;
}

}  // namespace

Tensor SynthDataset::texture(std::int64_t id) const {
  Rng rng = Rng(spec_.seed).fork(kTextureStream + std::uint64_t(id));
  const int s = spec_.hr_size;
  Tensor img(1, 3, s, s, 0.5f);

  // smooth color blobs
  const int n_blobs = 4 + int(rng.below(4));
  for (int b = 0; b < n_blobs; ++b) {
    const double cy = rng.uniform(0, s), cx = rng.uniform(0, s);
    const double sigma = rng.uniform(s / 8.0, s / 3.0);
    double amp[3];
    for (auto& a : amp) a = rng.uniform(-0.35, 0.35);
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const double e = std::exp(-r2 / (2 * sigma * sigma));
        for (int c = 0; c < 3; ++c)
          img.at(0, c, y, x) += float(amp[c] * e);
      }
  }

  // oriented high-frequency stripes under a Gaussian envelope; the band sits
  // above the x4 LR Nyquist rate (so the LR input cannot carry it) but low
  // enough that bilinear resampling of the references keeps most of it
  const int n_stripes = 5 + int(rng.below(4));
  for (int gb = 0; gb < n_stripes; ++gb) {
    const double cy = rng.uniform(0, s), cx = rng.uniform(0, s);
    const double sigma = rng.uniform(s / 10.0, s / 4.0);
    const double theta = rng.uniform(0, 3.14159265358979);
    const double freq = rng.uniform(0.16, 0.30);  // cycles/px
    const double phase = rng.uniform(0, 6.28318530717959);
    const double base_amp = rng.uniform(0.15, 0.35);
    double amp[3];
    for (auto& a : amp) a = base_amp * rng.uniform(0.7, 1.0);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const double env = std::exp(-r2 / (2 * sigma * sigma));
        const double wave =
            std::cos(6.28318530717959 * freq * (x * ct + y * st) + phase);
        for (int c = 0; c < 3; ++c)
          img.at(0, c, y, x) += float(amp[c] * env * wave);
      }
  }

  for (auto& v : img.data) v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return img;
}

SynthSample SynthDataset::sample(std::int64_t index) const {
  Rng rng = Rng(spec_.seed).fork(kSampleStream + std::uint64_t(index));
  SynthSample out;
  out.hr = texture(index % spec_.count);
  const double rot = spec_.max_rotate_deg * 3.14159265358979 / 180.0;
  for (int r = 0; r < spec_.n_refs; ++r) {
    const double angle = rng.uniform(-rot, rot);
    const double sc = rng.uniform(spec_.scale_lo, spec_.scale_hi);
    const double ty = rng.uniform(-spec_.max_translate, spec_.max_translate);
    const double tx = rng.uniform(-spec_.max_translate, spec_.max_translate);
    out.refs.push_back(similarity_resample(out.hr, angle, sc, ty, tx));
  }
  out.lr = make_lr(out.hr, spec_.scale);

  if (spec_.flip == FlipMode::even) {
    if (rng.coin()) {
      out.lr = flip_horizontal(out.lr);
      out.hr = flip_horizontal(out.hr);
      for (auto& ref : out.refs) ref = flip_horizontal(ref);
    }
  } else if (spec_.flip == FlipMode::uneven) {
    // flip exactly one side of the pair, half of the time
    const auto pick = rng.below(4);
    if (pick == 2) {
      out.lr = flip_horizontal(out.lr);
      out.hr = flip_horizontal(out.hr);
    } else if (pick == 3) {
      for (auto& ref : out.refs) ref = flip_horizontal(ref);
    }
  }
  return out;
}

}  // namespace exsr
