#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "exsr/errors.hpp"

namespace exsr {

// Dense rank-4 array, layout (N, C, H, W) row-major, W innermost.
template <class T>
struct TensorT {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  TensorT() = default;
  TensorT(int n_, int c_, int h_, int w_, T fill = T(0));
  TensorT(int n_, int c_, int h_, int w_, std::vector<T> values);

  std::size_t numel() const { return data.size(); }
  bool same_shape(const TensorT& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const;

  std::size_t idx(int in, int ic, int iy, int ix) const {
    return ((std::size_t(in) * c + ic) * h + iy) * w + ix;
  }
  T& at(int in, int ic, int iy, int ix) { return data[idx(in, ic, iy, ix)]; }
  T at(int in, int ic, int iy, int ix) const { return data[idx(in, ic, iy, ix)]; }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

// Reverse-mode contract: maps an output cotangent to one cotangent per
// differentiable input (shapes match the inputs).
template <class T>
using VjpFnT = std::function<std::vector<TensorT<T>>(const TensorT<T>&)>;

template <class T>
struct DiffOutT {
  TensorT<T> value;
  VjpFnT<T> vjp;
};

enum class EwOp { add, sub, mul };
enum class ActKind { relu, sigmoid };

// ---- plain kernels (no vjp) ----

// Elementwise a (op) b. b may equal a's shape or be broadcastable as
// (1,C,1,1) or (1,1,H,W).
template <class T>
TensorT<T> ew(const TensorT<T>& a, const TensorT<T>& b, EwOp op);

template <class T>
TensorT<T> scaled(const TensorT<T>& a, T s);

template <class T>
void add_inplace(TensorT<T>& a, const TensorT<T>& b);

// Per-channel spatial mean, shape (N,C,1,1).
template <class T>
TensorT<T> channel_mean(const TensorT<T>& a);

template <class T>
TensorT<T> apply_activation(const TensorT<T>& a, ActKind kind);

template <class T>
T sum_all(const TensorT<T>& a);

// Concatenate along the channel axis.
template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b);

// Channels [c0, c0+len) as a new tensor.
template <class T>
TensorT<T> slice_channels(const TensorT<T>& a, int c0, int len);

// ---- differentiable surface ----

template <class T>
DiffOutT<T> ew_binary(const TensorT<T>& a, const TensorT<T>& b, EwOp op);

template <class T>
DiffOutT<T> channel_mean_op(const TensorT<T>& a);

template <class T>
DiffOutT<T> activation(const TensorT<T>& a, ActKind kind);

// ---- parameters ----

template <class T>
struct ParamT {
  std::string id;
  TensorT<T> value;
  TensorT<T> grad;  // same shape, zero until a backward pass runs

  ParamT(std::string id_, TensorT<T> value_)
      : id(std::move(id_)),
        value(std::move(value_)),
        grad(value.n, value.c, value.h, value.w, T(0)) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

// Owns all trainable parameters of a model, addressable by unique id.
// Iteration order is the sorted id order.
template <class T>
class ParamRegistryT {
 public:
  ParamT<T>* add(const std::string& id, TensorT<T> init) {
    if (items_.count(id)) throw ConfigError("duplicate param id: " + id);
    auto p = std::make_unique<ParamT<T>>(id, std::move(init));
    ParamT<T>* raw = p.get();
    items_.emplace(id, std::move(p));
    return raw;
  }
  ParamT<T>* find(const std::string& id) const {
    auto it = items_.find(id);
    return it == items_.end() ? nullptr : it->second.get();
  }
  std::size_t size() const { return items_.size(); }
  void zero_grads() {
    for (auto& [id, p] : items_) p->zero_grad();
  }
  template <class F>
  void for_each(F&& fn) const {
    for (auto& [id, p] : items_) fn(*p);
  }
  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(items_.size());
    for (auto& [id, p] : items_) out.push_back(id);
    return out;
  }

 private:
  std::map<std::string, std::unique_ptr<ParamT<T>>> items_;
};

using Param = ParamT<float>;
using ParamRegistry = ParamRegistryT<float>;

}  // namespace exsr
