#pragma once

#include <cstdint>

namespace exsr {

// Static-schedule parallel loop over [0, n). Each index must be computed
// independently of the partitioning so results stay bit-identical for any
// thread count. Scatter-style kernels must not use this over their output
// unless each index owns a disjoint output slice.
template <class F>
inline void parallel_for(std::int64_t n, F&& body) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    body(i);
  }
}

}  // namespace exsr
