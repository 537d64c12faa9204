#pragma once

#include <cmath>
#include <functional>

#include "revdistill/core/rng.hpp"
#include "revdistill/core/tensor.hpp"

namespace testsupport {

using revdistill::Rng;
using revdistill::Tensor;

inline void fill_random(Tensor<double>& t, Rng& rng, double scale = 1.0) {
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, scale);
}

inline void fill_random(Tensor<float>& t, Rng& rng, double scale = 1.0) {
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal(0.0, scale));
}

// Central finite difference of f with respect to *slot.
inline double fd_central(const std::function<double()>& f, double* slot, double h = 1e-5) {
  const double saved = *slot;
  *slot = saved + h;
  const double hi = f();
  *slot = saved - h;
  const double lo = f();
  *slot = saved;
  return (hi - lo) / (2 * h);
}

inline double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

// Compares an analytic gradient tensor against finite differences of f.
inline double max_grad_rel_err(const std::function<double()>& f, Tensor<double>& x,
                               const Tensor<double>& analytic, double h = 1e-5) {
  double worst = 0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double num = fd_central(f, &x[i], h);
    worst = std::max(worst, rel_err(num, analytic[i]));
  }
  return worst;
}

}  // namespace testsupport
