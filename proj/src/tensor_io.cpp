#include "exsr/tensor_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace exsr {

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  buf.append(b, 4);
}

std::uint32_t get_u32(const std::string& buf, std::size_t& pos) {
  if (pos + 4 > buf.size()) throw FormatError("HTF truncated");
  auto b = reinterpret_cast<const unsigned char*>(buf.data() + pos);
  pos += 4;
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

}  // namespace

template <class T>
void append_htf(const TensorT<T>& t, std::string& buf) {
  buf.append("HTF1", 4);
  buf.push_back(sizeof(T) == 4 ? char(0) : char(1));
  put_u32(buf, std::uint32_t(t.n));
  put_u32(buf, std::uint32_t(t.c));
  put_u32(buf, std::uint32_t(t.h));
  put_u32(buf, std::uint32_t(t.w));
  buf.append(reinterpret_cast<const char*>(t.data.data()),
             t.data.size() * sizeof(T));
}

template <class T>
void write_htf(const TensorT<T>& t, const std::string& path) {
  std::string buf;
  buf.reserve(21 + t.data.size() * sizeof(T));
  append_htf(t, buf);
  atomic_write_file(path, buf);
}

HtfAny parse_htf(const std::string& buf, std::size_t& pos) {
  if (pos + 5 > buf.size() || std::memcmp(buf.data() + pos, "HTF1", 4) != 0)
    throw FormatError("bad HTF magic");
  pos += 4;
  HtfAny out;
  out.dtype = int(static_cast<unsigned char>(buf[pos++]));
  if (out.dtype != 0 && out.dtype != 1)
    throw FormatError("bad HTF dtype byte " + std::to_string(out.dtype));
  int n = int(get_u32(buf, pos)), c = int(get_u32(buf, pos));
  int h = int(get_u32(buf, pos)), w = int(get_u32(buf, pos));
  std::size_t count = std::size_t(n) * c * h * w;
  std::size_t bytes = count * (out.dtype == 0 ? 4 : 8);
  if (pos + bytes > buf.size()) throw FormatError("HTF payload truncated");
  if (out.dtype == 0) {
    std::vector<float> v(count);
    std::memcpy(v.data(), buf.data() + pos, bytes);
    out.f32 = Tensor(n, c, h, w, std::move(v));
  } else {
    std::vector<double> v(count);
    std::memcpy(v.data(), buf.data() + pos, bytes);
    out.f64 = TensorD(n, c, h, w, std::move(v));
  }
  pos += bytes;
  return out;
}

HtfAny read_htf(const std::string& path) {
  std::string buf = read_file(path);
  std::size_t pos = 0;
  return parse_htf(buf, pos);
}

Tensor HtfAny::as_f32() const {
  if (dtype == 0) return f32;
  Tensor out(f64.n, f64.c, f64.h, f64.w);
  for (std::size_t i = 0; i < f64.data.size(); ++i)
    out.data[i] = float(f64.data[i]);
  return out;
}

TensorD HtfAny::as_f64() const {
  if (dtype == 1) return f64;
  TensorD out(f32.n, f32.c, f32.h, f32.w);
  for (std::size_t i = 0; i < f32.data.size(); ++i)
    out.data[i] = double(f32.data[i]);
  return out;
}

void atomic_write_file(const std::string& path, const std::string& contents) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp + " for writing");
    f.write(contents.data(), std::streamsize(contents.size()));
    if (!f) throw IoError("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("rename " + tmp + " -> " + path + " failed");
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  return buf;
}

template void write_htf<float>(const Tensor&, const std::string&);
template void write_htf<double>(const TensorD&, const std::string&);
template void append_htf<float>(const Tensor&, std::string&);
template void append_htf<double>(const TensorD&, std::string&);

}  // namespace exsr
