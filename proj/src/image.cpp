#include "exsr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <vector>

#include "exsr/resize.hpp"
#include "exsr/tensor_io.hpp"

namespace exsr {

namespace {

std::string hex_bytes(const unsigned char* p, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    s += digits[p[i] >> 4];
    s += digits[p[i] & 15];
    if (i + 1 < n) s += ' ';
  }
  return s;
}

Tensor pixels_to_tensor(const std::vector<unsigned char>& px, int c, int h,
                        int w) {
  Tensor t(1, c, h, w);
  for (int ic = 0; ic < c; ++ic)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        t.at(0, ic, y, x) =
            float(px[(std::size_t(y) * w + x) * c + ic]) / 255.0f;
  return t;
}

std::vector<unsigned char> tensor_to_pixels(const Tensor& t) {
  std::vector<unsigned char> px(std::size_t(t.h) * t.w * t.c);
  for (int ic = 0; ic < t.c; ++ic)
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x) {
        float v = t.at(0, ic, y, x);
        v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
        px[(std::size_t(y) * t.w + x) * t.c + ic] =
            (unsigned char)(std::floor(v * 255.0f + 0.5f));
      }
  return px;
}

struct PngReadCtx {
  const unsigned char* data;
  std::size_t size, pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t len) {
  auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
  if (ctx->pos + len > ctx->size) png_error(png, "png read past end");
  std::memcpy(out, ctx->data + ctx->pos, len);
  ctx->pos += len;
}

Tensor load_png(const std::string& buf) {
  auto* bytes = reinterpret_cast<const unsigned char*>(buf.data());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  PngReadCtx ctx{bytes, buf.size(), 0};
  std::vector<unsigned char> px;
  int w = 0, h = 0, channels = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG");
  }
  png_set_read_fn(png, &ctx, png_mem_read);
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8 || (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_GRAY)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported PNG (bit depth " + std::to_string(depth) +
                      ", color type " + std::to_string(color) +
                      "); need 8-bit RGB or gray");
  }
  w = int(png_get_image_width(png, info));
  h = int(png_get_image_height(png, info));
  channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
  px.resize(std::size_t(w) * h * channels);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = px.data() + std::size_t(y) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels_to_tensor(px, channels, h, w);
}

void png_mem_write(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), len);
}

void png_mem_flush(png_structp) {}

std::string encode_png(const Tensor& t) {
  auto px = tensor_to_pixels(t);
  std::string out;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed");
  }
  png_set_write_fn(png, &out, png_mem_write, png_mem_flush);
  png_set_IHDR(png, info, t.w, t.h, 8,
               t.c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(t.h);
  for (int y = 0; y < t.h; ++y)
    rows[y] = px.data() + std::size_t(y) * t.w * t.c;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

// Binary PPM (P6) / PGM (P5), maxval 255.
Tensor load_pnm(const std::string& buf) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < buf.size()) {
      if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
        ++pos;
      } else if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_ws();
    int v = 0;
    bool any = false;
    while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
      v = v * 10 + (buf[pos++] - '0');
      any = true;
    }
    if (!any) throw FormatError("bad PNM header");
    return v;
  };
  if (buf.size() < 2) throw FormatError("truncated PNM");
  const bool rgb = buf[1] == '6';
  pos = 2;
  const int w = read_int(), h = read_int(), maxval = read_int();
  if (maxval != 255)
    throw FormatError("unsupported PNM maxval " + std::to_string(maxval) +
                      "; need 255");
  ++pos;  // single whitespace after maxval
  const int c = rgb ? 3 : 1;
  const std::size_t need = std::size_t(w) * h * c;
  if (pos + need > buf.size()) throw FormatError("truncated PNM payload");
  std::vector<unsigned char> px(need);
  std::memcpy(px.data(), buf.data() + pos, need);
  return pixels_to_tensor(px, c, h, w);
}

std::string encode_pnm(const Tensor& t) {
  auto px = tensor_to_pixels(t);
  std::string out = (t.c == 3 ? std::string("P6") : std::string("P5")) + "\n" +
                    std::to_string(t.w) + " " + std::to_string(t.h) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(px.data()), px.size());
  return out;
}

bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace

Tensor load_image(const std::string& path) {
  const std::string buf = read_file(path);
  if (buf.size() >= 8 && std::memcmp(buf.data(), "\x89PNG\r\n\x1a\n", 8) == 0)
    return load_png(buf);
  if (buf.size() >= 2 && buf[0] == 'P' && (buf[1] == '5' || buf[1] == '6'))
    return load_pnm(buf);
  const std::size_t n = std::min<std::size_t>(8, buf.size());
  throw FormatError(
      "unrecognized image format in " + path + " (header bytes: " +
      hex_bytes(reinterpret_cast<const unsigned char*>(buf.data()), n) + ")");
}

void save_image(const Tensor& t, const std::string& path) {
  if (t.n != 1 || (t.c != 1 && t.c != 3))
    throw ShapeError("save_image needs (1,1,H,W) or (1,3,H,W), got " +
                     t.shape_str());
  const std::string payload =
      (ends_with(path, ".ppm") || ends_with(path, ".pgm")) ? encode_pnm(t)
                                                           : encode_png(t);
  atomic_write_file(path, payload);
}

Tensor clamp_unit(const Tensor& t) {
  Tensor out = t;
  for (auto& v : out.data) v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return out;
}

template <class T>
TensorT<T> flip_horizontal(const TensorT<T>& t) {
  TensorT<T> out(t.n, t.c, t.h, t.w);
  for (int in = 0; in < t.n; ++in)
    for (int ic = 0; ic < t.c; ++ic)
      for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x)
          out.at(in, ic, y, x) = t.at(in, ic, y, t.w - 1 - x);
  return out;
}

template <class T>
double psnr(const TensorT<T>& a, const TensorT<T>& b, double peak) {
  if (!a.same_shape(b))
    throw ShapeError("psnr shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  double mse = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    mse += d * d;
  }
  mse /= double(a.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(size);
  const double c = (size - 1) / 2.0;
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace

template <class T>
double ssim(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b))
    throw ShapeError("ssim shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  const int win = 11;
  if (a.h < win || a.w < win)
    throw ParamError("image " + a.shape_str() + " smaller than the " +
                     std::to_string(win) + "x" + std::to_string(win) +
                     " SSIM window");
  const auto g = gaussian_window(win, 1.5);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // L = 1
  double total = 0;
  for (int in = 0; in < a.n; ++in)
    for (int ic = 0; ic < a.c; ++ic) {
      double acc = 0;
      std::size_t count = 0;
      for (int y0 = 0; y0 + win <= a.h; ++y0)
        for (int x0 = 0; x0 + win <= a.w; ++x0) {
          double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
          for (int dy = 0; dy < win; ++dy)
            for (int dx = 0; dx < win; ++dx) {
              const double wv = g[dy] * g[dx];
              const double va = a.at(in, ic, y0 + dy, x0 + dx);
              const double vb = b.at(in, ic, y0 + dy, x0 + dx);
              mx += wv * va;
              my += wv * vb;
              xx += wv * va * va;
              yy += wv * vb * vb;
              xy += wv * va * vb;
            }
          const double sx = xx - mx * mx, sy = yy - my * my, sxy = xy - mx * my;
          acc += ((2 * mx * my + c1) * (2 * sxy + c2)) /
                 ((mx * mx + my * my + c1) * (sx + sy + c2));
          ++count;
        }
      total += acc / double(count);
    }
  return total / (double(a.n) * a.c);
}

template <class T>
TensorT<T> make_lr(const TensorT<T>& hr, int s) {
  if (s < 1) throw ParamError("downscale factor must be positive");
  if (hr.h % s != 0 || hr.w % s != 0)
    throw ShapeError("image " + hr.shape_str() + " not divisible by " +
                     std::to_string(s));
  return bicubic_resize_forward(hr, 1.0 / double(s));
}

Tensor corrmap_render(const CorrelationMap& m) {
  // mean across the k^2 channels
  Tensor mean(1, 1, m.h, m.w, 0.0f);
  for (int ic = 0; ic < m.c; ++ic)
    for (int y = 0; y < m.h; ++y)
      for (int x = 0; x < m.w; ++x) mean.at(0, 0, y, x) += m.at(0, ic, y, x);
  for (auto& v : mean.data) v /= float(m.c);

  float lo = mean.data[0], hi = mean.data[0];
  for (float v : mean.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Tensor norm = mean;
  if (hi > lo)
    for (auto& v : norm.data) v = (v - lo) / (hi - lo);
  else
    for (auto& v : norm.data) v = 0.5f;

  std::vector<float> sorted(norm.data.begin(), norm.data.end());
  std::nth_element(sorted.begin(), sorted.begin() + (sorted.size() - 1) / 2,
                   sorted.end());
  const float med = sorted[(sorted.size() - 1) / 2];

  // coolwarm endpoints, white at the median
  const float blue[3] = {59 / 255.f, 76 / 255.f, 192 / 255.f};
  const float white[3] = {1.f, 1.f, 1.f};
  const float red[3] = {180 / 255.f, 4 / 255.f, 38 / 255.f};
  Tensor img(1, 3, m.h, m.w);
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      const float v = norm.at(0, 0, y, x);
      float t;
      const float* a;
      const float* b;
      if (v < med) {
        a = blue;
        b = white;
        t = med > 0.f ? v / med : 0.f;
      } else {
        a = white;
        b = red;
        t = med < 1.f ? (v - med) / (1.f - med) : 0.f;
      }
      for (int ic = 0; ic < 3; ++ic)
        img.at(0, ic, y, x) = a[ic] + (b[ic] - a[ic]) * t;
    }
  return img;
}

void corrmap_visualize(const CorrelationMap& m, const std::string& path) {
  save_image(corrmap_render(m), path);
}

#define EXSR_INSTANTIATE(T)                                         \
  template TensorT<T> flip_horizontal<T>(const TensorT<T>&);        \
  template double psnr<T>(const TensorT<T>&, const TensorT<T>&, double); \
  template double ssim<T>(const TensorT<T>&, const TensorT<T>&);    \
  template TensorT<T> make_lr<T>(const TensorT<T>&, int);

EXSR_INSTANTIATE(float)
EXSR_INSTANTIATE(double)
#undef EXSR_INSTANTIATE

}  // namespace exsr
