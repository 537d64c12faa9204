#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "revdistill/core/rng.hpp"
#include "revdistill/nn/kernels.hpp"

namespace revdistill::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void init(std::string n, std::vector<int64_t> shape) {
    name = std::move(n);
    value = Tensor<T>(shape);
    grad = Tensor<T>(shape);
  }
};

template <typename T>
using ParamRefs = std::vector<Parameter<T>*>;

// Named tensors for serialization: trainable parameters plus buffers such as
// batch-norm running statistics.
template <typename T>
using StateMap = std::map<std::string, Tensor<T>*>;

enum class Mode {
  kInfer,  // running statistics, no caches, logically const
  kTrain,  // batch statistics, caches kept for backward
};

// He (fan-out) initialization for a conv weight followed by ReLU.
template <typename T>
inline void he_init(Tensor<T>& w, int64_t fan_out, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_out));
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal(0.0, stddev));
}

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int64_t in_ch, int64_t out_ch, int64_t ksize, int64_t stride,
         int64_t pad)
      : stride_(stride), pad_(pad) {
    weight.init(name + ".weight", {out_ch, in_ch, ksize, ksize});
  }

  void init_params(Rng& rng) {
    he_init(weight.value, weight.value.dim(0) * weight.value.dim(2) * weight.value.dim(3),
            rng);
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    return conv2d_fwd(x, weight.value, stride_, pad_);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::kTrain) x_cache_ = x;
    return conv2d_fwd(x, weight.value, stride_, pad_);
  }

  // Returns dx unless need_dx is false (first trainable layer above a frozen
  // input has no use for it; the returned tensor is then empty).
  Tensor<T> backward(const Tensor<T>& dy, bool need_dx = true) {
    RD_CHECK_MSG(!x_cache_.empty(), "backward without cached forward: " << weight.name);
    Tensor<T> dx;
    if (need_dx) dx = Tensor<T>(x_cache_.shape());
    conv2d_bwd(x_cache_, weight.value, dy, stride_, pad_, &weight.grad,
               need_dx ? &dx : nullptr);
    return dx;
  }

  void collect(ParamRefs<T>& out) { out.push_back(&weight); }
  void collect_state(StateMap<T>& out) { out[weight.name] = &weight.value; }

  Parameter<T> weight;

 private:
  int64_t stride_ = 1, pad_ = 0;
  Tensor<T> x_cache_;
};

template <typename T>
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2() = default;
  ConvTranspose2x2(std::string name, int64_t in_ch, int64_t out_ch) {
    weight.init(name + ".weight", {in_ch, out_ch, 2, 2});
  }

  void init_params(Rng& rng) {
    // fan_out of a stride-2 2x2 transposed conv: each output location is hit
    // by exactly one kernel tap.
    he_init(weight.value, weight.value.dim(1), rng);
  }

  Tensor<T> infer(const Tensor<T>& x) const { return deconv2x2_fwd(x, weight.value); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::kTrain) x_cache_ = x;
    return deconv2x2_fwd(x, weight.value);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    RD_CHECK_MSG(!x_cache_.empty(), "backward without cached forward: " << weight.name);
    Tensor<T> dx(x_cache_.shape());
    deconv2x2_bwd(x_cache_, weight.value, dy, &weight.grad, &dx);
    return dx;
  }

  void collect(ParamRefs<T>& out) { out.push_back(&weight); }
  void collect_state(StateMap<T>& out) { out[weight.name] = &weight.value; }

  Parameter<T> weight;

 private:
  Tensor<T> x_cache_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int64_t channels) : name_(std::move(name)) {
    gamma.init(name_ + ".weight", {channels});
    beta.init(name_ + ".bias", {channels});
    gamma.value.fill(T(1));
    running_mean = Tensor<T>({channels});
    running_var = Tensor<T>({channels}, T(1));
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    return bn_fwd_eval(x, gamma.value, beta.value, running_mean, running_var, eps);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::kInfer) return infer(x);
    x_cache_ = x;
    return bn_fwd_train(x, gamma.value, beta.value, running_mean, running_var, momentum,
                        eps, cache_);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    RD_CHECK_MSG(!x_cache_.empty(), "backward without cached forward: " << name_);
    return bn_bwd(x_cache_, dy, gamma.value, cache_, &gamma.grad, &beta.grad);
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  void collect_state(StateMap<T>& out) {
    out[gamma.name] = &gamma.value;
    out[beta.name] = &beta.value;
    out[name_ + ".running_mean"] = &running_mean;
    out[name_ + ".running_var"] = &running_var;
  }

  Parameter<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

 private:
  std::string name_;
  Tensor<T> x_cache_;
  BnCache<T> cache_;
};

template <typename T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y = relu_fwd(x);
    if (mode == Mode::kTrain) y_cache_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    RD_CHECK_MSG(!y_cache_.empty(), "relu backward without cached forward");
    return relu_bwd(y_cache_, dy);
  }

 private:
  Tensor<T> y_cache_;
};

// Conv -> BN -> ReLU unit, the workhorse of the fusion block.
template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(const std::string& name, int64_t in_ch, int64_t out_ch, int64_t ksize,
             int64_t stride, int64_t pad)
      : conv_(name + ".conv", in_ch, out_ch, ksize, stride, pad),
        bn_(name + ".bn", out_ch) {}

  Tensor<T> infer(const Tensor<T>& x) const { return relu_fwd(bn_.infer(conv_.infer(x))); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::kInfer) return infer(x);
    return relu_.forward(bn_.forward(conv_.forward(x, mode), mode), mode);
  }

  Tensor<T> backward(const Tensor<T>& dy, bool need_dx = true) {
    return conv_.backward(bn_.backward(relu_.backward(dy)), need_dx);
  }

  void collect(ParamRefs<T>& out) {
    conv_.collect(out);
    bn_.collect(out);
  }
  void collect_state(StateMap<T>& out) {
    conv_.collect_state(out);
    bn_.collect_state(out);
  }
  void init_params(Rng& rng) { conv_.init_params(rng); }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
  Relu<T> relu_;
};

}  // namespace revdistill::nn
