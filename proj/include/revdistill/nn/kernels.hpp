#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "revdistill/core/gemm.hpp"
#include "revdistill/core/tensor.hpp"

namespace revdistill::nn {

inline int64_t conv_out_size(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// x_chw: one sample (C,H,W) -> col (C*kh*kw, OH*OW), zero-filled outside pads.
template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t OH, int64_t OW, T* col) {
  for (int64_t c = 0; c < C; ++c) {
    const T* xc = x + c * H * W;
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        T* row = col + ((c * kh + ki) * kw + kj) * OH * OW;
        for (int64_t oh = 0; oh < OH; ++oh) {
          int64_t ih = oh * stride - pad + ki;
          T* dst = row + oh * OW;
          if (ih < 0 || ih >= H) {
            for (int64_t ow = 0; ow < OW; ++ow) dst[ow] = T(0);
            continue;
          }
          const T* src = xc + ih * W;
          int64_t iw = -pad + kj;
          for (int64_t ow = 0; ow < OW; ++ow, iw += stride) {
            dst[ow] = (iw >= 0 && iw < W) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add of col (C*kh*kw, OH*OW) back into (C,H,W).
template <typename T>
void col2im_add(const T* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t OH, int64_t OW, T* x) {
  for (int64_t c = 0; c < C; ++c) {
    T* xc = x + c * H * W;
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        const T* row = col + ((c * kh + ki) * kw + kj) * OH * OW;
        for (int64_t oh = 0; oh < OH; ++oh) {
          int64_t ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          T* dst = xc + ih * W;
          const T* src = row + oh * OW;
          int64_t iw = -pad + kj;
          for (int64_t ow = 0; ow < OW; ++ow, iw += stride) {
            if (iw >= 0 && iw < W) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

// x (B,C,H,W), w (Co,C,kh,kw) -> y (B,Co,OH,OW). Bias-free: every convolution
// in this network is followed by a normalization layer.
template <typename T>
Tensor<T> conv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, int64_t stride, int64_t pad) {
  RD_CHECK(x.ndim() == 4 && w.ndim() == 4);
  RD_CHECK_MSG(x.dim(1) == w.dim(1),
               "conv input channels " << x.dim(1) << " vs weight " << w.dim(1));
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t OH = conv_out_size(H, kh, stride, pad);
  const int64_t OW = conv_out_size(W, kw, stride, pad);
  RD_CHECK(OH > 0 && OW > 0);
  const int64_t K = C * kh * kw, P = OH * OW;
  Tensor<T> y({B, Co, OH, OW});
  std::vector<T> col(static_cast<size_t>(K * P));
  for (int64_t b = 0; b < B; ++b) {
    im2col(x.data() + b * C * H * W, C, H, W, kh, kw, stride, pad, OH, OW, col.data());
    gemm(false, false, static_cast<int>(Co), static_cast<int>(P), static_cast<int>(K),
         T(1), w.data(), static_cast<int>(K), col.data(), static_cast<int>(P), T(0),
         y.data() + b * Co * P, static_cast<int>(P));
  }
  return y;
}

// Accumulates into dw; writes dx when given. x is the saved forward input.
template <typename T>
void conv2d_bwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                int64_t stride, int64_t pad, Tensor<T>* dw, Tensor<T>* dx) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t OH = dy.dim(2), OW = dy.dim(3);
  const int64_t K = C * kh * kw, P = OH * OW;
  std::vector<T> col(static_cast<size_t>(K * P));
  std::vector<T> dcol(dx ? static_cast<size_t>(K * P) : 0);
  for (int64_t b = 0; b < B; ++b) {
    const T* dy_b = dy.data() + b * Co * P;
    if (dw) {
      im2col(x.data() + b * C * H * W, C, H, W, kh, kw, stride, pad, OH, OW, col.data());
      // dW += dY_b * col^T
      gemm(false, true, static_cast<int>(Co), static_cast<int>(K), static_cast<int>(P),
           T(1), dy_b, static_cast<int>(P), col.data(), static_cast<int>(P), T(1),
           dw->data(), static_cast<int>(K));
    }
    if (dx) {
      // dcol = W^T * dY_b
      gemm(true, false, static_cast<int>(K), static_cast<int>(P), static_cast<int>(Co),
           T(1), w.data(), static_cast<int>(K), dy_b, static_cast<int>(P), T(0),
           dcol.data(), static_cast<int>(P));
      col2im_add(dcol.data(), C, H, W, kh, kw, stride, pad, OH, OW,
                 dx->data() + b * C * H * W);
    }
  }
}

// Transposed convolution, kernel 2 stride 2 (the only flavor the decoder
// uses). Output patches do not overlap, so both passes are plain GEMMs plus a
// reshuffle. w has shape (Ci,Co,2,2).
template <typename T>
Tensor<T> deconv2x2_fwd(const Tensor<T>& x, const Tensor<T>& w) {
  RD_CHECK(x.ndim() == 4 && w.ndim() == 4 && w.dim(2) == 2 && w.dim(3) == 2);
  RD_CHECK(x.dim(1) == w.dim(0));
  const int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Co = w.dim(1), P = H * W;
  Tensor<T> y({B, Co, 2 * H, 2 * W});
  std::vector<T> patch(static_cast<size_t>(Co * 4 * P));
  for (int64_t b = 0; b < B; ++b) {
    // patch[(co,dh,dw), p] = sum_ci w[ci,(co,dh,dw)] * x[ci,p]
    gemm(true, false, static_cast<int>(Co * 4), static_cast<int>(P), static_cast<int>(Ci),
         T(1), w.data(), static_cast<int>(Co * 4), x.data() + b * Ci * P,
         static_cast<int>(P), T(0), patch.data(), static_cast<int>(P));
    T* yb = y.data() + b * Co * 4 * P;
    for (int64_t co = 0; co < Co; ++co) {
      for (int64_t dh = 0; dh < 2; ++dh) {
        for (int64_t dw_ = 0; dw_ < 2; ++dw_) {
          const T* src = patch.data() + ((co * 2 + dh) * 2 + dw_) * P;
          for (int64_t h = 0; h < H; ++h) {
            T* dst = yb + co * 4 * P + (2 * h + dh) * 2 * W + dw_;
            const T* s = src + h * W;
            for (int64_t v = 0; v < W; ++v) dst[2 * v] = s[v];
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
void deconv2x2_bwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                   Tensor<T>* dw, Tensor<T>* dx) {
  const int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Co = w.dim(1), P = H * W;
  std::vector<T> dpatch(static_cast<size_t>(Co * 4 * P));
  for (int64_t b = 0; b < B; ++b) {
    const T* dyb = dy.data() + b * Co * 4 * P;
    for (int64_t co = 0; co < Co; ++co) {
      for (int64_t dh = 0; dh < 2; ++dh) {
        for (int64_t dw_ = 0; dw_ < 2; ++dw_) {
          T* dst = dpatch.data() + ((co * 2 + dh) * 2 + dw_) * P;
          for (int64_t h = 0; h < H; ++h) {
            const T* s = dyb + co * 4 * P + (2 * h + dh) * 2 * W + dw_;
            T* d = dst + h * W;
            for (int64_t v = 0; v < W; ++v) d[v] = s[2 * v];
          }
        }
      }
    }
    if (dw) {
      // dW[ci,(co4)] += sum_p x[ci,p] * dpatch[(co4),p]
      gemm(false, true, static_cast<int>(Ci), static_cast<int>(Co * 4),
           static_cast<int>(P), T(1), x.data() + b * Ci * P, static_cast<int>(P),
           dpatch.data(), static_cast<int>(P), T(1), dw->data(),
           static_cast<int>(Co * 4));
    }
    if (dx) {
      // dX = W * dpatch
      gemm(false, false, static_cast<int>(Ci), static_cast<int>(P),
           static_cast<int>(Co * 4), T(1), w.data(), static_cast<int>(Co * 4),
           dpatch.data(), static_cast<int>(P), T(1), dx->data() + b * Ci * P,
           static_cast<int>(P));
    }
  }
}

// ---- Batch normalization ----

template <typename T>
struct BnCache {
  Tensor<T> mean;     // (C)
  Tensor<T> inv_std;  // (C)
};

template <typename T>
Tensor<T> bn_fwd_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps) {
  const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> y(x.shape());
  for (int64_t c = 0; c < C; ++c) {
    const T scale = gamma[c] / std::sqrt(running_var[c] + eps);
    const T shift = beta[c] - running_mean[c] * scale;
    for (int64_t b = 0; b < B; ++b) {
      const T* xs = x.data() + (b * C + c) * HW;
      T* ys = y.data() + (b * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) ys[i] = xs[i] * scale + shift;
    }
  }
  return y;
}

// Normalizes with batch statistics and updates running stats in place
// (running variance uses the unbiased estimate, normalization the biased one).
template <typename T>
Tensor<T> bn_fwd_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var, T momentum, T eps,
                       BnCache<T>& cache) {
  const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const int64_t m = B * HW;
  RD_CHECK(m > 0);
  cache.mean = Tensor<T>({C});
  cache.inv_std = Tensor<T>({C});
  Tensor<T> y(x.shape());
  for (int64_t c = 0; c < C; ++c) {
    double s = 0, s2 = 0;
    for (int64_t b = 0; b < B; ++b) {
      const T* xs = x.data() + (b * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        s += xs[i];
        s2 += double(xs[i]) * double(xs[i]);
      }
    }
    const double mean = s / double(m);
    double var = s2 / double(m) - mean * mean;
    if (var < 0) var = 0;
    cache.mean[c] = static_cast<T>(mean);
    cache.inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + double(eps)));
    const double unbiased = m > 1 ? var * double(m) / double(m - 1) : var;
    running_mean[c] = static_cast<T>((1 - momentum) * running_mean[c] + momentum * mean);
    running_var[c] = static_cast<T>((1 - momentum) * running_var[c] + momentum * unbiased);
    const T scale = gamma[c] * cache.inv_std[c];
    const T shift = beta[c] - static_cast<T>(mean) * scale;
    for (int64_t b = 0; b < B; ++b) {
      const T* xs = x.data() + (b * C + c) * HW;
      T* ys = y.data() + (b * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) ys[i] = xs[i] * scale + shift;
    }
  }
  return y;
}

template <typename T>
Tensor<T> bn_bwd(const Tensor<T>& x, const Tensor<T>& dy, const Tensor<T>& gamma,
                 const BnCache<T>& cache, Tensor<T>* dgamma, Tensor<T>* dbeta) {
  const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const int64_t m = B * HW;
  Tensor<T> dx(x.shape());
  for (int64_t c = 0; c < C; ++c) {
    const T mean = cache.mean[c];
    const T istd = cache.inv_std[c];
    double sum_dy = 0, sum_dy_xhat = 0;
    for (int64_t b = 0; b < B; ++b) {
      const T* xs = x.data() + (b * C + c) * HW;
      const T* dys = dy.data() + (b * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        sum_dy += dys[i];
        sum_dy_xhat += double(dys[i]) * double((xs[i] - mean) * istd);
      }
    }
    if (dgamma) (*dgamma)[c] += static_cast<T>(sum_dy_xhat);
    if (dbeta) (*dbeta)[c] += static_cast<T>(sum_dy);
    const T k = gamma[c] * istd;
    const T mean_dy = static_cast<T>(sum_dy / double(m));
    const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / double(m));
    for (int64_t b = 0; b < B; ++b) {
      const T* xs = x.data() + (b * C + c) * HW;
      const T* dys = dy.data() + (b * C + c) * HW;
      T* dxs = dx.data() + (b * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        const T xhat = (xs[i] - mean) * istd;
        dxs[i] = k * (dys[i] - mean_dy - xhat * mean_dy_xhat);
      }
    }
  }
  return dx;
}

// ---- ReLU ----

template <typename T>
Tensor<T> relu_fwd(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const T* xs = x.data();
  T* ys = y.data();
  for (int64_t i = 0; i < x.numel(); ++i) ys[i] = xs[i] > T(0) ? xs[i] : T(0);
  return y;
}

// y is the forward output; gradient passes where the unit was active.
template <typename T>
Tensor<T> relu_bwd(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(dy.shape());
  const T* ys = y.data();
  const T* dys = dy.data();
  T* dxs = dx.data();
  for (int64_t i = 0; i < dy.numel(); ++i) dxs[i] = ys[i] > T(0) ? dys[i] : T(0);
  return dx;
}

// ---- Max pooling (3x3, stride 2, pad 1; forward only) ----

template <typename T>
Tensor<T> maxpool3x3s2_fwd(const Tensor<T>& x) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t OH = conv_out_size(H, 3, 2, 1), OW = conv_out_size(W, 3, 2, 1);
  Tensor<T> y({B, C, OH, OW});
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* xs = x.data() + bc * H * W;
    T* ys = y.data() + bc * OH * OW;
    for (int64_t oh = 0; oh < OH; ++oh) {
      for (int64_t ow = 0; ow < OW; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        for (int64_t ki = 0; ki < 3; ++ki) {
          const int64_t ih = oh * 2 - 1 + ki;
          if (ih < 0 || ih >= H) continue;
          for (int64_t kj = 0; kj < 3; ++kj) {
            const int64_t iw = ow * 2 - 1 + kj;
            if (iw < 0 || iw >= W) continue;
            const T v = xs[ih * W + iw];
            if (v > best) best = v;
          }
        }
        ys[oh * OW + ow] = best;
      }
    }
  }
  return y;
}

}  // namespace revdistill::nn
