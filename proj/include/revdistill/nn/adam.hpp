#pragma once

#include <cmath>
#include <vector>

#include "revdistill/nn/layers.hpp"

namespace revdistill::nn {

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(ParamRefs<T> params, T lr, T beta1, T beta2, T eps = T(1e-8))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      slots_[i].m = Tensor<T>(params_[i]->value.shape());
      slots_[i].v = Tensor<T>(params_[i]->value.shape());
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), t_);
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      Parameter<T>& p = *params_[i];
      T* w = p.value.data();
      const T* g = p.grad.data();
      T* m = slots_[i].m.data();
      T* v = slots_[i].v.data();
      for (int64_t j = 0; j < p.value.numel(); ++j) {
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
        const T mhat = m[j] / static_cast<T>(bc1);
        const T vhat = v[j] / static_cast<T>(bc2);
        w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void zero_grad() {
    for (Parameter<T>* p : params_) p->grad.zero();
  }

  int64_t steps() const { return t_; }

 private:
  struct Slot {
    Tensor<T> m, v;
  };
  ParamRefs<T> params_;
  std::vector<Slot> slots_;
  T lr_ = T(0.005), beta1_ = T(0.5), beta2_ = T(0.999), eps_ = T(1e-8);
  int64_t t_ = 0;
};

}  // namespace revdistill::nn
