#pragma once

#include <optional>
#include <string>

#include "revdistill/nn/layers.hpp"

namespace revdistill::nn {

// Two-conv residual block (the resnet18/34 flavor). Parameter names follow
// the usual layer{n}.{b}.* convention so exported pretrained weights map 1:1.
template <typename T>
class BasicBlock {
 public:
  static constexpr int64_t kExpansion = 1;

  BasicBlock() = default;
  BasicBlock(const std::string& name, int64_t in_ch, int64_t planes, int64_t stride)
      : conv1_(name + ".conv1", in_ch, planes, 3, stride, 1),
        bn1_(name + ".bn1", planes),
        conv2_(name + ".conv2", planes, planes, 3, 1, 1),
        bn2_(name + ".bn2", planes) {
    if (stride != 1 || in_ch != planes) {
      ds_conv_.emplace(name + ".downsample.0", in_ch, planes, 1, stride, 0);
      ds_bn_.emplace(name + ".downsample.1", planes);
    }
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    Tensor<T> out = relu_fwd(bn1_.infer(conv1_.infer(x)));
    out = bn2_.infer(conv2_.infer(out));
    if (ds_conv_) {
      add_inplace(out, ds_bn_->infer(ds_conv_->infer(x)));
    } else {
      add_inplace(out, x);
    }
    return relu_fwd(out);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::kInfer) return infer(x);
    Tensor<T> out = relu1_.forward(bn1_.forward(conv1_.forward(x, mode), mode), mode);
    out = bn2_.forward(conv2_.forward(out, mode), mode);
    if (ds_conv_) {
      add_inplace(out, ds_bn_->forward(ds_conv_->forward(x, mode), mode));
    } else {
      add_inplace(out, x);
    }
    return relu2_.forward(out, mode);
  }

  Tensor<T> backward(const Tensor<T>& dy, bool need_dx = true) {
    Tensor<T> d = relu2_.backward(dy);
    Tensor<T> d_main = bn2_.backward(d);
    d_main = conv2_.backward(d_main);
    d_main = relu1_.backward(d_main);
    d_main = bn1_.backward(d_main);
    Tensor<T> dx = conv1_.backward(d_main, need_dx || !ds_conv_.has_value());
    if (ds_conv_) {
      Tensor<T> d_short = ds_conv_->backward(ds_bn_->backward(d), need_dx);
      if (!need_dx) return Tensor<T>();
      add_inplace(dx, d_short);
    } else {
      add_inplace(dx, d);  // identity shortcut
    }
    return dx;
  }

  void collect(ParamRefs<T>& out) {
    conv1_.collect(out);
    bn1_.collect(out);
    conv2_.collect(out);
    bn2_.collect(out);
    if (ds_conv_) {
      ds_conv_->collect(out);
      ds_bn_->collect(out);
    }
  }

  void collect_state(StateMap<T>& out) {
    conv1_.collect_state(out);
    bn1_.collect_state(out);
    conv2_.collect_state(out);
    bn2_.collect_state(out);
    if (ds_conv_) {
      ds_conv_->collect_state(out);
      ds_bn_->collect_state(out);
    }
  }

  void init_params(Rng& rng) {
    conv1_.init_params(rng);
    conv2_.init_params(rng);
    if (ds_conv_) ds_conv_->init_params(rng);
  }

 private:
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  Relu<T> relu1_, relu2_;
  std::optional<Conv2d<T>> ds_conv_;
  std::optional<BatchNorm2d<T>> ds_bn_;
};

// Three-conv residual block (resnet50 / wide variants). base_width 128 gives
// the wide flavor; output channels are planes * 4 either way.
template <typename T>
class BottleneckBlock {
 public:
  static constexpr int64_t kExpansion = 4;

  BottleneckBlock() = default;
  BottleneckBlock(const std::string& name, int64_t in_ch, int64_t planes, int64_t stride,
                  int64_t base_width)
      : width_(planes * base_width / 64),
        conv1_(name + ".conv1", in_ch, width_, 1, 1, 0),
        bn1_(name + ".bn1", width_),
        conv2_(name + ".conv2", width_, width_, 3, stride, 1),
        bn2_(name + ".bn2", width_),
        conv3_(name + ".conv3", width_, planes * kExpansion, 1, 1, 0),
        bn3_(name + ".bn3", planes * kExpansion) {
    if (stride != 1 || in_ch != planes * kExpansion) {
      ds_conv_.emplace(name + ".downsample.0", in_ch, planes * kExpansion, 1, stride, 0);
      ds_bn_.emplace(name + ".downsample.1", planes * kExpansion);
    }
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    Tensor<T> out = relu_fwd(bn1_.infer(conv1_.infer(x)));
    out = relu_fwd(bn2_.infer(conv2_.infer(out)));
    out = bn3_.infer(conv3_.infer(out));
    if (ds_conv_) {
      add_inplace(out, ds_bn_->infer(ds_conv_->infer(x)));
    } else {
      add_inplace(out, x);
    }
    return relu_fwd(out);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::kInfer) return infer(x);
    Tensor<T> out = relu1_.forward(bn1_.forward(conv1_.forward(x, mode), mode), mode);
    out = relu2_.forward(bn2_.forward(conv2_.forward(out, mode), mode), mode);
    out = bn3_.forward(conv3_.forward(out, mode), mode);
    if (ds_conv_) {
      add_inplace(out, ds_bn_->forward(ds_conv_->forward(x, mode), mode));
    } else {
      add_inplace(out, x);
    }
    return relu3_.forward(out, mode);
  }

  Tensor<T> backward(const Tensor<T>& dy, bool need_dx = true) {
    Tensor<T> d = relu3_.backward(dy);
    Tensor<T> d_main = conv3_.backward(bn3_.backward(d));
    d_main = bn2_.backward(relu2_.backward(d_main));
    d_main = bn1_.backward(relu1_.backward(conv2_.backward(d_main)));
    Tensor<T> dx = conv1_.backward(d_main, need_dx || !ds_conv_.has_value());
    if (ds_conv_) {
      Tensor<T> d_short = ds_conv_->backward(ds_bn_->backward(d), need_dx);
      if (!need_dx) return Tensor<T>();
      add_inplace(dx, d_short);
    } else {
      add_inplace(dx, d);
    }
    return dx;
  }

  void collect(ParamRefs<T>& out) {
    conv1_.collect(out);
    bn1_.collect(out);
    conv2_.collect(out);
    bn2_.collect(out);
    conv3_.collect(out);
    bn3_.collect(out);
    if (ds_conv_) {
      ds_conv_->collect(out);
      ds_bn_->collect(out);
    }
  }

  void collect_state(StateMap<T>& out) {
    conv1_.collect_state(out);
    bn1_.collect_state(out);
    conv2_.collect_state(out);
    bn2_.collect_state(out);
    conv3_.collect_state(out);
    bn3_.collect_state(out);
    if (ds_conv_) {
      ds_conv_->collect_state(out);
      ds_bn_->collect_state(out);
    }
  }

  void init_params(Rng& rng) {
    conv1_.init_params(rng);
    conv2_.init_params(rng);
    conv3_.init_params(rng);
    if (ds_conv_) ds_conv_->init_params(rng);
  }

 private:
  int64_t width_ = 0;
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  Conv2d<T> conv3_;
  BatchNorm2d<T> bn3_;
  Relu<T> relu1_, relu2_, relu3_;
  std::optional<Conv2d<T>> ds_conv_;
  std::optional<BatchNorm2d<T>> ds_bn_;
};

// Decoding counterpart of BasicBlock. The stage-entry block doubles the
// spatial size: both the first conv and the shortcut become 2x2 stride-2
// transposed convolutions.
template <typename T>
class DeBasicBlock {
 public:
  DeBasicBlock() = default;
  DeBasicBlock(const std::string& name, int64_t in_ch, int64_t planes, bool upsample)
      : upsample_(upsample),
        bn1_(name + ".bn1", planes),
        conv2_(name + ".conv2", planes, planes, 3, 1, 1),
        bn2_(name + ".bn2", planes) {
    if (upsample) {
      deconv1_ = ConvTranspose2x2<T>(name + ".conv1", in_ch, planes);
      us_deconv_.emplace(name + ".upsample.0", in_ch, planes);
      us_bn_.emplace(name + ".upsample.1", planes);
    } else {
      RD_CHECK(in_ch == planes);
      conv1_ = Conv2d<T>(name + ".conv1", in_ch, planes, 3, 1, 1);
    }
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    Tensor<T> out = upsample_ ? deconv1_.infer(x) : conv1_.infer(x);
    out = relu_fwd(bn1_.infer(out));
    out = bn2_.infer(conv2_.infer(out));
    if (upsample_) {
      add_inplace(out, us_bn_->infer(us_deconv_->infer(x)));
    } else {
      add_inplace(out, x);
    }
    return relu_fwd(out);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::kInfer) return infer(x);
    Tensor<T> out = upsample_ ? deconv1_.forward(x, mode) : conv1_.forward(x, mode);
    out = relu1_.forward(bn1_.forward(out, mode), mode);
    out = bn2_.forward(conv2_.forward(out, mode), mode);
    if (upsample_) {
      add_inplace(out, us_bn_->forward(us_deconv_->forward(x, mode), mode));
    } else {
      add_inplace(out, x);
    }
    return relu2_.forward(out, mode);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = relu2_.backward(dy);
    Tensor<T> d_main = bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(d))));
    Tensor<T> dx = upsample_ ? deconv1_.backward(d_main) : conv1_.backward(d_main);
    if (upsample_) {
      add_inplace(dx, us_deconv_->backward(us_bn_->backward(d)));
    } else {
      add_inplace(dx, d);
    }
    return dx;
  }

  void collect(ParamRefs<T>& out) {
    if (upsample_) {
      deconv1_.collect(out);
      us_deconv_->collect(out);
      us_bn_->collect(out);
    } else {
      conv1_.collect(out);
    }
    bn1_.collect(out);
    conv2_.collect(out);
    bn2_.collect(out);
  }

  void collect_state(StateMap<T>& out) {
    if (upsample_) {
      deconv1_.collect_state(out);
      us_deconv_->collect_state(out);
      us_bn_->collect_state(out);
    } else {
      conv1_.collect_state(out);
    }
    bn1_.collect_state(out);
    conv2_.collect_state(out);
    bn2_.collect_state(out);
  }

  void init_params(Rng& rng) {
    if (upsample_) {
      deconv1_.init_params(rng);
      us_deconv_->init_params(rng);
    } else {
      conv1_.init_params(rng);
    }
    conv2_.init_params(rng);
  }

 private:
  bool upsample_ = false;
  Conv2d<T> conv1_;
  ConvTranspose2x2<T> deconv1_;
  BatchNorm2d<T> bn1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  Relu<T> relu1_, relu2_;
  std::optional<ConvTranspose2x2<T>> us_deconv_;
  std::optional<BatchNorm2d<T>> us_bn_;
};

// Decoding counterpart of BottleneckBlock.
template <typename T>
class DeBottleneckBlock {
 public:
  static constexpr int64_t kExpansion = 4;

  DeBottleneckBlock() = default;
  DeBottleneckBlock(const std::string& name, int64_t in_ch, int64_t planes, bool upsample,
                    int64_t base_width)
      : upsample_(upsample),
        width_(planes * base_width / 64),
        conv1_(name + ".conv1", in_ch, width_, 1, 1, 0),
        bn1_(name + ".bn1", width_),
        bn2_(name + ".bn2", width_),
        conv3_(name + ".conv3", width_, planes * kExpansion, 1, 1, 0),
        bn3_(name + ".bn3", planes * kExpansion) {
    if (upsample) {
      deconv2_ = ConvTranspose2x2<T>(name + ".conv2", width_, width_);
      us_deconv_.emplace(name + ".upsample.0", in_ch, planes * kExpansion);
      us_bn_.emplace(name + ".upsample.1", planes * kExpansion);
    } else {
      RD_CHECK(in_ch == planes * kExpansion);
      conv2_ = Conv2d<T>(name + ".conv2", width_, width_, 3, 1, 1);
    }
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    Tensor<T> out = relu_fwd(bn1_.infer(conv1_.infer(x)));
    out = upsample_ ? deconv2_.infer(out) : conv2_.infer(out);
    out = relu_fwd(bn2_.infer(out));
    out = bn3_.infer(conv3_.infer(out));
    if (upsample_) {
      add_inplace(out, us_bn_->infer(us_deconv_->infer(x)));
    } else {
      add_inplace(out, x);
    }
    return relu_fwd(out);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (mode == Mode::kInfer) return infer(x);
    Tensor<T> out = relu1_.forward(bn1_.forward(conv1_.forward(x, mode), mode), mode);
    out = upsample_ ? deconv2_.forward(out, mode) : conv2_.forward(out, mode);
    out = relu2_.forward(bn2_.forward(out, mode), mode);
    out = bn3_.forward(conv3_.forward(out, mode), mode);
    if (upsample_) {
      add_inplace(out, us_bn_->forward(us_deconv_->forward(x, mode), mode));
    } else {
      add_inplace(out, x);
    }
    return relu3_.forward(out, mode);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = relu3_.backward(dy);
    Tensor<T> d_main = conv3_.backward(bn3_.backward(d));
    d_main = bn2_.backward(relu2_.backward(d_main));
    d_main = upsample_ ? deconv2_.backward(d_main) : conv2_.backward(d_main);
    Tensor<T> dx = conv1_.backward(bn1_.backward(relu1_.backward(d_main)));
    if (upsample_) {
      add_inplace(dx, us_deconv_->backward(us_bn_->backward(d)));
    } else {
      add_inplace(dx, d);
    }
    return dx;
  }

  void collect(ParamRefs<T>& out) {
    conv1_.collect(out);
    bn1_.collect(out);
    if (upsample_) deconv2_.collect(out); else conv2_.collect(out);
    bn2_.collect(out);
    conv3_.collect(out);
    bn3_.collect(out);
    if (upsample_) {
      us_deconv_->collect(out);
      us_bn_->collect(out);
    }
  }

  void collect_state(StateMap<T>& out) {
    conv1_.collect_state(out);
    bn1_.collect_state(out);
    if (upsample_) deconv2_.collect_state(out); else conv2_.collect_state(out);
    bn2_.collect_state(out);
    conv3_.collect_state(out);
    bn3_.collect_state(out);
    if (upsample_) {
      us_deconv_->collect_state(out);
      us_bn_->collect_state(out);
    }
  }

  void init_params(Rng& rng) {
    conv1_.init_params(rng);
    if (upsample_) deconv2_.init_params(rng); else conv2_.init_params(rng);
    conv3_.init_params(rng);
    if (upsample_) us_deconv_->init_params(rng);
  }

 private:
  bool upsample_ = false;
  int64_t width_ = 0;
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  Conv2d<T> conv2_;
  ConvTranspose2x2<T> deconv2_;
  BatchNorm2d<T> bn2_;
  Conv2d<T> conv3_;
  BatchNorm2d<T> bn3_;
  Relu<T> relu1_, relu2_, relu3_;
  std::optional<ConvTranspose2x2<T>> us_deconv_;
  std::optional<BatchNorm2d<T>> us_bn_;
};

}  // namespace revdistill::nn
