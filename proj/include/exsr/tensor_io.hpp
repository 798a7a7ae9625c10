#pragma once

#include <string>

#include "exsr/tensor.hpp"

namespace exsr {

// HTF tensor file: "HTF1" | dtype byte (0=f32, 1=f64) | four u32 LE dims
// (N,C,H,W) | raw little-endian scalars, row-major. Round-trips bit-exactly.

template <class T>
void write_htf(const TensorT<T>& t, const std::string& path);

template <class T>
void append_htf(const TensorT<T>& t, std::string& buf);

struct HtfAny {
  int dtype = 0;  // 0=f32, 1=f64
  Tensor f32;     // populated when dtype==0
  TensorD f64;    // populated when dtype==1

  Tensor as_f32() const;
  TensorD as_f64() const;
};

HtfAny read_htf(const std::string& path);
HtfAny parse_htf(const std::string& buf, std::size_t& pos);

// Whole-file atomic write: temp file in the same directory, then rename.
void atomic_write_file(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

}  // namespace exsr
