#pragma once

#include <map>

#include "exsr/tensor.hpp"

namespace exsr {

template <class T>
struct AdamConfigT {
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

using AdamConfig = AdamConfigT<float>;

// Standard Adam with bias correction. One step consumes and zeroes the
// accumulated gradients. A NaN gradient aborts with the offending param id.
template <class T>
class AdamT {
 public:
  explicit AdamT(AdamConfigT<T> cfg = {}) : cfg_(cfg) {}

  void step(ParamRegistryT<T>& params);

  std::int64_t steps_taken() const { return t_; }
  const AdamConfigT<T>& config() const { return cfg_; }

 private:
  struct Moments {
    TensorT<T> m, v;
  };
  AdamConfigT<T> cfg_;
  std::map<std::string, Moments> moments_;
  std::int64_t t_ = 0;
};

using Adam = AdamT<float>;

}  // namespace exsr
