#include "exsr/optim.hpp"

#include <cmath>

namespace exsr {

template <class T>
void AdamT<T>::step(ParamRegistryT<T>& params) {
  ++t_;
  const T bc1 = T(1) - T(std::pow(double(cfg_.beta1), double(t_)));
  const T bc2 = T(1) - T(std::pow(double(cfg_.beta2), double(t_)));
  params.for_each([&](ParamT<T>& p) {
    auto it = moments_.find(p.id);
    if (it == moments_.end()) {
      Moments mo;
      mo.m = TensorT<T>(p.value.n, p.value.c, p.value.h, p.value.w, T(0));
      mo.v = mo.m;
      it = moments_.emplace(p.id, std::move(mo)).first;
    }
    Moments& mo = it->second;
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      const T g = p.grad.data[i];
      if (std::isnan(g))
        throw NumericError("NaN gradient in param " + p.id);
      mo.m.data[i] = cfg_.beta1 * mo.m.data[i] + (T(1) - cfg_.beta1) * g;
      mo.v.data[i] = cfg_.beta2 * mo.v.data[i] + (T(1) - cfg_.beta2) * g * g;
      const T mhat = mo.m.data[i] / bc1;
      const T vhat = mo.v.data[i] / bc2;
      p.value.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  });
}

template class AdamT<float>;
template class AdamT<double>;

}  // namespace exsr
