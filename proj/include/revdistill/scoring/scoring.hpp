#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "revdistill/core/tensor.hpp"
#include "revdistill/distill/anomaly.hpp"

namespace revdistill::scoring {

// Pixel-level score grid at input-image resolution.
template <typename T>
struct ScoreMap {
  Tensor<T> map;  // (R, R)
  bool smoothed = false;
  double sigma = 0.0;
};

// Bilinear upsampling with half-pixel sample centers and edge clamping.
// Downsampling is not this operator's job and is rejected by the caller.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& in, int64_t out_h, int64_t out_w) {
  RD_CHECK(in.ndim() == 2);
  const int64_t H = in.dim(0), W = in.dim(1);
  Tensor<T> out({out_h, out_w});
  const double sy = static_cast<double>(H) / static_cast<double>(out_h);
  const double sx = static_cast<double>(W) / static_cast<double>(out_w);
  std::vector<int64_t> x0(out_w), x1(out_w);
  std::vector<double> wx(out_w);
  for (int64_t j = 0; j < out_w; ++j) {
    const double x = (j + 0.5) * sx - 0.5;
    const double xf = std::floor(x);
    int64_t lo = static_cast<int64_t>(xf);
    wx[j] = x - xf;
    x0[j] = std::clamp<int64_t>(lo, 0, W - 1);
    x1[j] = std::clamp<int64_t>(lo + 1, 0, W - 1);
  }
  for (int64_t i = 0; i < out_h; ++i) {
    const double y = (i + 0.5) * sy - 0.5;
    const double yf = std::floor(y);
    const int64_t ylo = std::clamp<int64_t>(static_cast<int64_t>(yf), 0, H - 1);
    const int64_t yhi = std::clamp<int64_t>(static_cast<int64_t>(yf) + 1, 0, H - 1);
    const double ty = y - yf;
    const T* r0 = in.data() + ylo * W;
    const T* r1 = in.data() + yhi * W;
    T* dst = out.data() + i * out_w;
    for (int64_t j = 0; j < out_w; ++j) {
      const double tx = wx[j];
      const double a = (1 - ty) * ((1 - tx) * r0[x0[j]] + tx * r0[x1[j]]);
      const double b = ty * ((1 - tx) * r1[x0[j]] + tx * r1[x1[j]]);
      dst[j] = static_cast<T>(a + b);
    }
  }
  return out;
}

namespace detail {
// Mirror index with edge inclusion: -1 -> 0, -2 -> 1, n -> n-1.
inline int64_t reflect(int64_t i, int64_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}
}  // namespace detail

// Separable Gaussian blur, kernel radius 4*sigma, reflect padding. sigma == 0
// is the identity.
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& in, double sigma) {
  RD_CHECK(in.ndim() == 2);
  if (sigma <= 0.0) return in;
  const int64_t radius = std::max<int64_t>(1, std::llround(4.0 * sigma));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double ksum = 0;
  for (int64_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<size_t>(i + radius)] = v;
    ksum += v;
  }
  for (double& v : kernel) v /= ksum;

  const int64_t H = in.dim(0), W = in.dim(1);
  Tensor<T> tmp({H, W}), out({H, W});
  for (int64_t i = 0; i < H; ++i) {
    const T* src = in.data() + i * W;
    T* dst = tmp.data() + i * W;
    for (int64_t j = 0; j < W; ++j) {
      double acc = 0;
      for (int64_t k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<size_t>(k + radius)] * src[detail::reflect(j + k, W)];
      }
      dst[j] = static_cast<T>(acc);
    }
  }
  for (int64_t j = 0; j < W; ++j) {
    for (int64_t i = 0; i < H; ++i) {
      double acc = 0;
      for (int64_t k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<size_t>(k + radius)] *
               tmp.data()[detail::reflect(i + k, H) * W + j];
      }
      out.data()[i * W + j] = static_cast<T>(acc);
    }
  }
  return out;
}

// Upsamples every per-stage map of one sample to the output resolution and
// sums them. No smoothing; this is the quantity the novelty score integrates.
template <typename T>
ScoreMap<T> accumulate_maps(const AnomalyMapSet<T>& maps, int64_t sample,
                            int64_t out_resolution) {
  RD_CHECK_MSG(!maps.per_stage.empty(), "no anomaly maps to accumulate");
  Tensor<T> acc({out_resolution, out_resolution});
  for (size_t k = 0; k < maps.per_stage.size(); ++k) {
    const Tensor<T>& stage = maps.per_stage[k];
    if (stage.dim(1) > out_resolution || stage.dim(2) > out_resolution) {
      throw ShapeError("output resolution " + std::to_string(out_resolution) +
                       " is smaller than stage map " + std::to_string(stage.dim(1)) +
                       "; downsampling score maps is not supported");
    }
    Tensor<T> m = maps.sample_map(k, sample);
    Tensor<T> up = upsample_bilinear(m, out_resolution, out_resolution);
    add_inplace(acc, up);
  }
  ScoreMap<T> s;
  s.map = std::move(acc);
  return s;
}

// Accumulated, then Gaussian-smoothed localization map.
template <typename T>
ScoreMap<T> localization_map(const AnomalyMapSet<T>& maps, int64_t sample,
                             int64_t out_resolution, double sigma = 4.0) {
  ScoreMap<T> s = accumulate_maps(maps, sample, out_resolution);
  if (sigma > 0.0) {
    s.map = gaussian_blur(s.map, sigma);
    s.smoothed = true;
    s.sigma = sigma;
  }
  return s;
}

// Image-level anomaly score: the most responsive location.
template <typename T>
T detection_score(const ScoreMap<T>& s) {
  return max_value(s.map);
}

// Novelty score: total response over the map.
template <typename T>
T novelty_score(const ScoreMap<T>& s) {
  return sum(s.map);
}

// Raw float32 grid export: text header "<H> <W>\n" then row-major
// little-endian float32.
template <typename T>
void write_raw_map(const ScoreMap<T>& s, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << s.map.dim(0) << " " << s.map.dim(1) << "\n";
  for (int64_t i = 0; i < s.map.numel(); ++i) {
    const float v = static_cast<float>(s.map[i]);
    os.write(reinterpret_cast<const char*>(&v), 4);
  }
}

template <typename T>
ScoreMap<T> read_raw_map(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  int64_t h = 0, w = 0;
  is >> h >> w;
  is.get();  // newline
  if (h <= 0 || w <= 0) throw DataError("bad raw map header: " + path);
  ScoreMap<T> s;
  s.map = Tensor<T>({h, w});
  for (int64_t i = 0; i < h * w; ++i) {
    float v;
    is.read(reinterpret_cast<char*>(&v), 4);
    s.map[i] = static_cast<T>(v);
  }
  if (!is) throw DataError("truncated raw map: " + path);
  return s;
}

}  // namespace revdistill::scoring
